use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the simulation stack.
#[derive(Debug, Error)]
pub enum KdError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl KdError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KdError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        KdError::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, KdError>;
