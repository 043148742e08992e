//! Experiment runner for `lplab`: configuration, named experiments,
//! convergence sweeps and report files with a manifest.

pub mod config;
pub mod experiments;
pub mod report;
pub mod sweep;

use lplab::LabError;
use thiserror::Error;

pub use config::{ExperimentConfig, Overrides};
pub use experiments::{find, registry, run_experiment, Experiment};
pub use report::{Manifest, RunOutput};
pub use sweep::{convergence_sweep, SweepTable};

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad configuration or input; exit code 2.
    #[error("{0}")]
    Validation(String),
    /// A solver or simulator failed; exit code 3.
    #[error("{0}")]
    Numerical(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 2,
            HarnessError::Numerical(_) => 3,
        }
    }

    /// Prefixes the message with `context`.
    pub fn context(self, context: &str) -> Self {
        match self {
            HarnessError::Validation(m) => HarnessError::Validation(format!("{context}: {m}")),
            HarnessError::Numerical(m) => HarnessError::Numerical(format!("{context}: {m}")),
        }
    }
}

impl From<LabError> for HarnessError {
    fn from(e: LabError) -> Self {
        if e.is_validation() {
            HarnessError::Validation(e.to_string())
        } else {
            HarnessError::Numerical(e.to_string())
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Numerical(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Numerical(format!("json: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
