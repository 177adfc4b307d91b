use std::path::PathBuf;

use kdsim::KdError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("{} is missing; run `kdsim {producer}` first", path.display())]
    Missing { path: PathBuf, producer: &'static str },

    #[error(
        "{} was produced by a different configuration (hash {found}, expected {expected}); \
         rerun `kdsim {producer}` or pass --force",
        path.display()
    )]
    Stale {
        path: PathBuf,
        producer: &'static str,
        expected: String,
        found: String,
    },

    #[error(transparent)]
    Core(#[from] KdError),

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 1 for configuration problems, 2 for everything that fails while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Stale { .. } | CliError::Core(KdError::Config(_)) => 1,
            _ => 2,
        }
    }
}
