//! Experiment orchestration: configuration, seeded sweeps, CSV output and
//! summaries.

pub mod config;
pub mod output;
pub mod sweep;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{parse_config, ConfigError, Overrides, SweepConfig};
pub use output::{format_number, summarize, summarize_dir, write_csv};
pub use sweep::{run_sweep, run_sweep_with_threads, AlgorithmCurve, RunSummary, SimulationResult, SweepResult};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Runtime(#[from] crate::error::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}: {reason}", path.display())]
    Malformed { path: PathBuf, reason: String },
}

impl HarnessError {
    /// 1 for configuration problems, 2 for everything that fails at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            _ => 2,
        }
    }
}
