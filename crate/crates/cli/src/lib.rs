//! Experiment runner: simulate observations, run ABC with any discrepancy,
//! compute reference posteriors, evaluate and sweep over seeds.

pub mod commands;
pub mod config;
pub mod error;
pub mod methods;

pub use config::{ExperimentConfig, Method};
pub use error::{CliError, CliResult};

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "SIGABC_THREADS";
