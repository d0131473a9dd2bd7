pub mod analysis;
pub mod cli;
pub mod error;
pub mod field;
pub mod noise;
pub mod par;
pub mod perm;
pub mod protocol;
pub mod rng;
pub mod shuffler;
pub mod stats;

pub use error::{Error, Result};
