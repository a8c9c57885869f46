//! Experiment runner: config files, training and evaluation runs,
//! matched-seed comparisons, oracle gaps and checkpoints.

pub mod checkpoint;
pub mod commands;
pub mod config;

use std::path::PathBuf;

use evcharge::marl::MarlError;
use evcharge::metrics::MetricsError;
use evcharge::oracle::OracleError;
use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use commands::{cmd_compare, cmd_eval, cmd_oracle, cmd_train};
pub use config::{Overrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{} already exists (use --force to overwrite)", .0.display())]
    Exists(PathBuf),
    #[error("oracle: {0}")]
    Infeasible(String),
}

impl CliError {
    /// Process exit code: 1 config, 2 runtime or numeric, 3 infeasible oracle.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Infeasible(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn context(self, ctx: &str) -> Self {
        match self {
            CliError::Runtime(m) => CliError::Runtime(format!("{ctx}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{ctx}: {m}")),
            other => other,
        }
    }
}

impl From<MarlError> for CliError {
    fn from(e: MarlError) -> Self {
        match e {
            MarlError::Config(m) => CliError::Config(m),
            MarlError::Dimension(m) => CliError::Dimension(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Io(m) => CliError::Io(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Infeasible => CliError::Infeasible(e.to_string()),
            OracleError::CapExceeded { .. } | OracleError::Invalid(_) => CliError::Config(format!("oracle: {e}")),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
