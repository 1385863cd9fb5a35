//! Errors of the experiment runner and their exit codes.

use equilab::LabError;
use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o failure: {0}")]
    Io(String),
    #[error("{context}: {source}")]
    Numerical { context: String, source: LabError },
}

impl From<LabError> for CliError {
    fn from(source: LabError) -> Self {
        CliError::Numerical { context: "numerical failure".into(), source }
    }
}

impl CliError {
    /// 1 for usage and configuration problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Numerical { .. } => 2,
        }
    }
}

/// Attaches scenario context to a numerical error.
pub fn context<T>(r: equilab::Result<T>, what: impl FnOnce() -> String) -> Result<T, CliError> {
    r.map_err(|source| CliError::Numerical { context: what(), source })
}
