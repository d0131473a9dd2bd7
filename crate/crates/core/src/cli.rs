//! Command-line front end.
//!
//! Every command reads an [`ExperimentConfig`] (a JSON file plus `--set`
//! overrides), prints a JSON [`RunReport`] and exits with 0 when all checks
//! pass, 1 when a check fails and 2 on invalid configuration.

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::analysis::{
    component_bound, disconnect_bound, empirical_component_dist, empirical_disconnect_prob,
    lemma_chain, q_power_expectation_bound, worst_average_check, DisconnectMode, QPowerCompanion,
};
use crate::error::{Error, Result};
use crate::field::choose_modulus;
use crate::noise::{dlap_mean_abs, polya_dlap_test};
use crate::par;
use crate::protocol::{
    check_security_preconditions, max_gamma, min_messages, real_summation_trials, required_messages,
    run_vector_summation, security_parameter, sigma_from_dp, MessagePlan, NoiseMode,
};
use crate::rng::stream_rng;
use crate::shuffler::{verify_imperfectness, ShufflerModel, VerifyMode};
use crate::stats::{median, Estimate, DEFAULT_SIGNIFICANCE};

/// Environment variable selecting the number of worker threads.
pub const THREADS_ENV: &str = "IMPERFECT_SHUFFLE_THREADS";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "imperfect-shuffle", version, about = "Split-and-mix summation with imperfect shufflers")]
pub struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set n=100 --set model.dispersion=0.2`.
    /// Values are parsed as JSON, falling back to strings.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Path for CSV data; defaults to `<out>.csv` when `--out` is given.
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
    /// Allow `noise: "disabled"` (deterministic test runs only).
    #[arg(long, global = true)]
    pub test_mode: bool,
    /// Record wall-clock time in the report.
    #[arg(long, global = true)]
    pub timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan σ, m, q and p for (n, ε, δ, γ).
    Params,
    /// Run the summation protocol for `trials` trials.
    Simulate,
    /// Check one of the security lemmas or distribution facts.
    Verify {
        #[arg(value_enum)]
        check: Check,
    },
    /// Same as `verify polya-dlap`.
    DistTest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    TvdChain,
    WorstAvg,
    Disconnect,
    Components,
    Qpower,
    Imperfectness,
    PolyaDlap,
}

/// Estimation mode for checks that support both.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Exact,
    MonteCarlo,
}

/// Union of the parameters used by every command; each command reads the
/// fields it needs and applies its own defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Security target in bits; overrides the one derived from (ε, δ).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ShufflerModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Common input value for every player.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    /// Explicit per-player inputs; overrides `x`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xs: Option<Vec<f64>>,
    #[serde(default)]
    pub noise: NoiseMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Null hypothesis for the Polya test; defaults to `alpha`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub significance: Option<f64>,
    /// 1-based players of the set `S`; all proper subsets when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default)]
    pub mode: Mode,
    /// Draw rounds from `S⁻¹∘S′` rather than `S`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub composed: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// The JSON document every command prints.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub results: Value,
    /// Present for verification commands.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
    /// Present only with `--timing`, since it varies between runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

/// Tabular output written next to the report.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn num(v: f64) -> String {
    // Shortest round-trip representation.
    format!("{v:?}")
}

struct Outcome {
    results: Value,
    pass: Option<bool>,
    table: Option<Table>,
}

/// Parses arguments and runs one command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_PASS };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<i32> {
    let config = load_config(cli.config.as_deref(), &cli.overrides)?;
    if config.noise == NoiseMode::Disabled && !cli.test_mode {
        return Err(Error::Config("noise \"disabled\" is only accepted with --test-mode".into()));
    }
    let started = Instant::now();
    let (name, outcome) = match threads_from_env()? {
        Some(t) => par::with_threads(t, || dispatch(&cli.command, &config)),
        None => dispatch(&cli.command, &config),
    }?;
    let report = RunReport {
        command: name,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        results: outcome.results,
        pass: outcome.pass,
        wall_clock_seconds: cli.timing.then(|| started.elapsed().as_secs_f64()),
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    let out = cli.out.clone().or_else(|| config.output.clone());
    match &out {
        Some(path) => std::fs::write(path, &text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    if let Some(table) = &outcome.table {
        let csv_path = cli.csv.clone().or_else(|| out.as_ref().map(|p| p.with_extension("csv")));
        if let Some(path) = csv_path {
            table.write(&path)?;
        }
    }
    Ok(match outcome.pass {
        Some(false) => EXIT_FAIL,
        _ => EXIT_PASS,
    })
}

fn dispatch(command: &Command, c: &ExperimentConfig) -> Result<(String, Outcome)> {
    Ok(match command {
        Command::Params => ("params".into(), cmd_params(c)?),
        Command::Simulate => ("simulate".into(), cmd_simulate(c)?),
        Command::Verify { check } => (format!("verify {}", check_name(*check)), cmd_verify(*check, c)?),
        Command::DistTest => ("dist-test".into(), cmd_verify(Check::PolyaDlap, c)?),
    })
}

fn check_name(check: Check) -> String {
    check.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
}

/// Reads the config file (if any), applies `key=value` overrides and
/// deserializes the result.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut root = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str::<Value>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => Value::Object(Map::new()),
    };
    if !root.is_object() {
        return Err(Error::Config("config must be a JSON object".into()));
    }
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {item:?} is not KEY=VALUE")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut root, key, value)?;
    }
    fill_model_size(&mut root);
    serde_json::from_value(root).map_err(|e| Error::Config(e.to_string()))
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("invalid key {key:?}")));
    }
    let mut cur = root;
    for part in &parts[..parts.len() - 1] {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("{key:?} descends into a non-object")))?;
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    cur.as_object_mut()
        .ok_or_else(|| Error::Config(format!("{key:?} descends into a non-object")))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Lets a model descriptor omit `n` when the config gives it.
fn fill_model_size(root: &mut Value) {
    let Some(n) = root.get("n").cloned() else { return };
    if let Some(model) = root.get_mut("model").and_then(Value::as_object_mut) {
        let sized = matches!(
            model.get("type").and_then(Value::as_str),
            Some("uniform" | "cayley-mallows" | "timestamp-laplace")
        );
        if sized && !model.contains_key("n") {
            model.insert("n".into(), n);
        }
    }
}

fn need<T: Copy>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("missing required key {name:?}")))
}

fn model_or_uniform(c: &ExperimentConfig, n: usize) -> Result<ShufflerModel> {
    let model = c.model.clone().unwrap_or(ShufflerModel::Uniform { n });
    model.validate().map_err(|e| Error::Config(format!("model: {e}")))?;
    if model.n() != n {
        return Err(Error::Config(format!("model is over {} players but n={n}", model.n())));
    }
    Ok(model)
}

fn cmd_params(c: &ExperimentConfig) -> Result<Outcome> {
    let n = need(c.n, "n")?;
    let gamma = c.gamma.unwrap_or(0.0);
    let target = match c.sigma {
        Some(s) => s,
        None => f64::from(sigma_from_dp(need(c.epsilon, "epsilon")?, need(c.delta, "delta")?)?),
    };
    let m = required_messages(n, gamma, target)?;
    let q = choose_modulus(n)?.get();
    let achieved = security_parameter(n, m, q, gamma)?;
    let checks = json!([
        {"name": "n >= 19", "holds": n >= 19},
        {"name": format!("gamma <= log2(log2 n)/80 = {}", max_gamma(n)), "holds": gamma <= max_gamma(n)},
        {"name": format!("m >= 8e^(4γ) (m_min = {})", min_messages(gamma)), "holds": m >= min_messages(gamma)},
        {"name": "q <= (n/e)^((m-1)/(32e^(4γ)))·e^(2γ(1-m))", "holds": check_security_preconditions(n, m, q, gamma).is_ok()},
    ]);
    Ok(Outcome {
        results: json!({
            "sigma_target": target,
            "m": m,
            "q": q,
            "p": (n as f64).sqrt(),
            "security_parameter": achieved,
            "preconditions": checks,
        }),
        pass: None,
        table: None,
    })
}

fn cmd_simulate(c: &ExperimentConfig) -> Result<Outcome> {
    let epsilon = need(c.epsilon, "epsilon")?;
    let xs = match &c.xs {
        Some(xs) => xs.clone(),
        None => vec![c.x.unwrap_or(0.5); need(c.n, "n")?],
    };
    let n = xs.len();
    if c.n.is_some_and(|cn| cn != n) {
        return Err(Error::Config(format!("n={} disagrees with {} inputs", c.n.unwrap_or(0), n)));
    }
    let model = model_or_uniform(c, n)?;
    let trials = c.trials.unwrap_or(1000);
    let d = c.d.unwrap_or(1);
    if trials == 0 || d == 0 {
        return Err(Error::Config("trials and d must be at least 1".into()));
    }
    let plan = match (c.m, c.delta) {
        (Some(m), _) => MessagePlan::Fixed(m),
        (None, Some(_)) => MessagePlan::Planned { gamma: c.gamma.unwrap_or(0.0) },
        (None, None) => MessagePlan::Fixed(DEFAULT_SIMULATE_MESSAGES),
    };
    let p = (n as f64).sqrt();
    let eps_c = epsilon / d as f64;
    let reference = if c.noise == NoiseMode::Disabled {
        0.0
    } else {
        dlap_mean_abs((-eps_c / p).exp())? / p
    };
    let mut table;
    let errors: Vec<f64>;
    let m_used;
    if d == 1 && matches!(plan, MessagePlan::Fixed(_)) {
        let MessagePlan::Fixed(m) = plan else { unreachable!() };
        m_used = m;
        let outs = real_summation_trials(&xs, epsilon, &model, m, c.noise, trials, c.seed)?;
        table = Table::new(&["trial", "estimate", "true_sum", "abs_error"]);
        for (t, o) in outs.iter().enumerate() {
            table.push(vec![t.to_string(), num(o.estimate), num(o.true_sum), num(o.abs_error)]);
        }
        errors = outs.iter().map(|o| o.abs_error).collect();
    } else {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x; d]).collect();
        let delta = c.delta.unwrap_or(1e-6);
        let first = run_vector_summation(&rows, epsilon, delta, &model, plan, c.noise, &mut stream_rng(c.seed, 0))?;
        m_used = first.m;
        let plan = MessagePlan::Fixed(first.m);
        let outs = par::map_trials(trials, |t| {
            run_vector_summation(&rows, epsilon, delta, &model, plan, c.noise, &mut stream_rng(c.seed, t as u64))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        table = Table::new(&["trial", "coordinate", "estimate", "true_sum", "abs_error"]);
        let mut errs = Vec::with_capacity(trials * d);
        for (t, o) in outs.iter().enumerate() {
            for k in 0..d {
                let e = (o.estimates[k] - o.true_sums[k]).abs();
                table.push(vec![t.to_string(), k.to_string(), num(o.estimates[k]), num(o.true_sums[k]), num(e)]);
                errs.push(e);
            }
        }
        errors = errs;
    }
    let mean = Estimate::mean(&errors);
    Ok(Outcome {
        results: json!({
            "n": n,
            "m": m_used,
            "d": d,
            "trials": trials,
            "epsilon_per_coordinate": eps_c,
            "mean_abs_error": mean.value,
            "mean_abs_error_half_width": mean.half_width,
            "median_abs_error": median(&errors),
            "max_abs_error": errors.iter().copied().fold(0.0, f64::max),
            "reference_abs_error": reference,
        }),
        pass: None,
        table: Some(table),
    })
}

/// Messages per player when neither `m` nor `delta` is configured.
pub const DEFAULT_SIMULATE_MESSAGES: usize = 3;

fn cmd_verify(check: Check, c: &ExperimentConfig) -> Result<Outcome> {
    match check {
        Check::TvdChain => {
            let (n, m, q) = (c.n.unwrap_or(3), c.m.unwrap_or(2), c.q.unwrap_or(3));
            let model = model_or_uniform(c, n)?;
            let r = lemma_chain(n, m, q, &model)?;
            let pass = r.pass();
            Ok(Outcome { results: serde_json::to_value(r)?, pass: Some(pass), table: None })
        }
        Check::WorstAvg => {
            let (n, m, q) = (c.n.unwrap_or(3), c.m.unwrap_or(1), c.q.unwrap_or(3));
            let model = model_or_uniform(c, n)?;
            let r = worst_average_check(n, m, q, &model)?;
            let pass = r.holds_per_difference;
            Ok(Outcome { results: serde_json::to_value(r)?, pass: Some(pass), table: None })
        }
        Check::Disconnect => verify_disconnect(c),
        Check::Components => verify_components(c),
        Check::Qpower => {
            let n = c.n.unwrap_or(19);
            let m = need(c.m, "m")?;
            let q = match c.q {
                Some(q) => q,
                None => choose_modulus(n)?.get(),
            };
            let gamma = c.gamma.unwrap_or(0.0);
            let model = c.model.as_ref().map(|_| model_or_uniform(c, n)).transpose()?;
            let companion = model.as_ref().map(|model| QPowerCompanion {
                model,
                trials: c.trials.unwrap_or(10_000),
                seed: c.seed,
                composed: c.composed.unwrap_or(true),
            });
            let r = q_power_expectation_bound(n, m, q, gamma, companion)?;
            let pass = r.estimate_within_bound().unwrap_or(true);
            Ok(Outcome { results: serde_json::to_value(r)?, pass: Some(pass), table: None })
        }
        Check::Imperfectness => {
            let model = c
                .model
                .clone()
                .ok_or_else(|| Error::Config("missing required key \"model\"".into()))?;
            model.validate().map_err(|e| Error::Config(format!("model: {e}")))?;
            let gamma = c.gamma.unwrap_or_else(|| model.nominal_gamma());
            let mode = match c.mode {
                Mode::Exact => VerifyMode::Exact,
                Mode::MonteCarlo => VerifyMode::MonteCarlo { samples: c.trials.unwrap_or(100_000), seed: c.seed },
            };
            let r = verify_imperfectness(&model, mode)?;
            let pass = r.is_imperfect_at(gamma);
            Ok(Outcome {
                results: json!({"gamma": gamma, "report": r}),
                pass: Some(pass),
                table: None,
            })
        }
        Check::PolyaDlap => {
            let n = c.n.unwrap_or(10);
            let alpha = c.alpha.unwrap_or(0.5);
            let r = polya_dlap_test(
                n,
                alpha,
                c.null_alpha.unwrap_or(alpha),
                c.trials.unwrap_or(100_000),
                c.seed,
                c.significance.unwrap_or(DEFAULT_SIGNIFICANCE),
            )?;
            let pass = r.pass();
            Ok(Outcome { results: serde_json::to_value(r)?, pass: Some(pass), table: None })
        }
    }
}

const MAX_SUBSET_ENUMERATION: usize = 16;

fn verify_disconnect(c: &ExperimentConfig) -> Result<Outcome> {
    let n = need(c.n, "n")?;
    let m = c.m.unwrap_or(1);
    let gamma = c.gamma.unwrap_or(0.0);
    let model = model_or_uniform(c, n)?;
    let subsets: Vec<Vec<usize>> = match &c.subset {
        Some(s) => {
            if s.iter().any(|&i| i == 0 || i > n) {
                return Err(Error::Config(format!("subset entries must lie in 1..={n}")));
            }
            vec![s.iter().map(|i| i - 1).collect()]
        }
        None => {
            if n > MAX_SUBSET_ENUMERATION {
                return Err(Error::Config(format!(
                    "enumerating all subsets needs n <= {MAX_SUBSET_ENUMERATION}; give \"subset\""
                )));
            }
            (1u32..(1 << n) - 1)
                .map(|mask| (0..n).filter(|i| mask >> i & 1 == 1).collect())
                .collect()
        }
    };
    let mode = match c.mode {
        Mode::Exact => DisconnectMode::Exact,
        Mode::MonteCarlo => DisconnectMode::MonteCarlo { trials: c.trials.unwrap_or(100_000), seed: c.seed },
    };
    let mut table = Table::new(&["subset", "probability", "half_width", "bound", "holds"]);
    let mut rows = Vec::new();
    let mut all = true;
    for s in &subsets {
        let mut bound = disconnect_bound(n, s.len(), m, gamma, c.k)?;
        bound.estimate = Some(empirical_disconnect_prob(&model, s, m, mode)?);
        let holds = bound.estimate_within_bound().unwrap_or(true);
        all &= holds;
        let one_based: Vec<usize> = s.iter().map(|i| i + 1).collect();
        let est = bound.estimate.unwrap_or(Estimate { value: 0.0, half_width: 0.0 });
        table.push(vec![
            one_based.iter().map(usize::to_string).collect::<Vec<_>>().join(" "),
            num(est.value),
            num(est.half_width),
            num(bound.value),
            holds.to_string(),
        ]);
        rows.push(json!({"subset": one_based, "holds": holds, "report": bound}));
    }
    let note = (model.nominal_gamma() > gamma)
        .then(|| format!("model is not {gamma}-imperfect (nominal distortion {})", model.nominal_gamma()));
    Ok(Outcome {
        results: json!({"n": n, "m": m, "gamma": gamma, "note": note, "subsets": rows}),
        pass: Some(all),
        table: Some(table),
    })
}

fn verify_components(c: &ExperimentConfig) -> Result<Outcome> {
    let n = c.n.unwrap_or(19);
    let m = c.m.unwrap_or(8);
    let gamma = c.gamma.unwrap_or(0.0);
    let model = model_or_uniform(c, n)?;
    let trials = c.trials.unwrap_or(100_000);
    let hist = empirical_component_dist(&model, m, trials, c.seed, c.composed.unwrap_or(true))?;
    let mut table = Table::new(&["components", "count", "p_hat", "half_width", "bound"]);
    let mut rows = Vec::new();
    let mut all = true;
    for comp in 1..=n {
        let est = hist.probability(comp);
        let bound = component_bound(n, comp, m, gamma)?;
        let holds = comp == 1 || est.value + est.half_width <= bound.value;
        all &= holds;
        table.push(vec![
            comp.to_string(),
            hist.counts[comp].to_string(),
            num(est.value),
            num(est.half_width),
            num(bound.value),
        ]);
        rows.push(json!({"components": comp, "count": hist.counts[comp], "p_hat": est, "bound": bound.value,
                         "vacuous": bound.vacuous, "holds": holds}));
    }
    Ok(Outcome {
        results: json!({"n": n, "m": m, "gamma": gamma, "trials": trials, "histogram": rows}),
        pass: Some(all),
        table: Some(table),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_build_nested_config() {
        let c = load_config(
            None,
            &[
                "n=100".into(),
                "epsilon=1".into(),
                "model.type=cayley-mallows".into(),
                "model.dispersion=0.2".into(),
                "subset=[1,2]".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.n, Some(100));
        assert_eq!(c.model, Some(ShufflerModel::cayley_mallows(100, 0.2)));
        assert_eq!(c.subset, Some(vec![1, 2]));
        assert_eq!(c.seed, 0);
        assert!(load_config(None, &["bogus=1".into()]).is_err());
        assert!(load_config(None, &["n".into()]).is_err());
    }

    #[test]
    fn config_file_and_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"n": 5, "seed": 9, "model": {"type": "uniform"}}"#).unwrap();
        let c = load_config(Some(&path), &["seed=3".into()]).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.model, Some(ShufflerModel::uniform(5)));
    }

    #[test]
    fn params_examples() {
        let c = load_config(None, &["n=1000000".into(), "epsilon=1".into(), format!("delta={}", 2f64.powi(-30))]).unwrap();
        let out = cmd_params(&c).unwrap();
        assert_eq!(out.results["sigma_target"], json!(31.0));
        assert_eq!(out.results["q"], json!(2_000_000_000u64));
        assert_eq!(out.results["m"], json!(required_messages(1_000_000, 0.0, 31.0).unwrap()));

        let small = load_config(None, &["n=18".into(), "epsilon=1".into(), "delta=1e-6".into()]).unwrap();
        let err = cmd_params(&small).err().unwrap();
        assert!(err.to_string().contains("n >= 19"), "{err}");

        let g = max_gamma(1_000_000) + 0.01;
        let wide = load_config(None, &["n=1000000".into(), "epsilon=1".into(), "delta=1e-6".into(), format!("gamma={g}")]).unwrap();
        assert!(cmd_params(&wide).err().unwrap().to_string().contains("gamma"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(main_with_args(["imperfect-shuffle", "verify", "nonsense"]), EXIT_INVALID);
        assert_eq!(
            main_with_args(["imperfect-shuffle", "--set", "noise=\"disabled\"", "--set", "n=4", "--set", "epsilon=1", "simulate"]),
            EXIT_INVALID
        );
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("r.json");
        let out_s = out.to_str().unwrap();
        assert_eq!(
            main_with_args(["imperfect-shuffle", "--out", out_s, "--set", "n=4", "--set", "model={\"type\":\"point-mass\",\"permutation\":[1,2,3,4]}", "--set", "m=2", "verify", "disconnect"]),
            EXIT_FAIL
        );
        assert_eq!(
            main_with_args(["imperfect-shuffle", "--out", out_s, "--set", "n=4", "--set", "m=2", "verify", "disconnect"]),
            EXIT_PASS
        );
        assert!(dir.path().join("r.csv").exists());
    }
}
