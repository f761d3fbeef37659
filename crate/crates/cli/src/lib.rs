//! Configuration loading and experiment dispatch for the `exfree-qst`
//! command-line tool.

pub mod config;
pub mod dispatch;

pub use config::{load_config, load_config_with, Experiment, Overrides, RawConfig, RunConfig};
pub use dispatch::{dispatch, run_experiment, Outcome, Report};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("regime error: {0}")]
    Regime(String),
    #[error("nonconvergence: {0}")]
    NonConvergence(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 2 config, 3 regime, 4 numerical nonconvergence, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Regime(_) => 3,
            CliError::NonConvergence(_) => 4,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<exfree_core::Error> for CliError {
    fn from(e: exfree_core::Error) -> Self {
        use exfree_core::Error as E;
        match e {
            E::Regime { .. } => CliError::Regime(e.to_string()),
            E::NonConvergence(_) | E::UnderDetermined(_) | E::DegenerateProjection { .. } => {
                CliError::NonConvergence(e.to_string())
            }
            E::OutOfTruncation { .. } | E::UnsupportedAsymmetry { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}
