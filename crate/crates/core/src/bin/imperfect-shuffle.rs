fn main() {
    std::process::exit(imperfect_shuffle::cli::main_with_args(std::env::args_os()));
}
