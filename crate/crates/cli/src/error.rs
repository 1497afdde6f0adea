use std::path::PathBuf;

use thiserror::Error;

/// Command failures, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or configuration. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Malformed input data or a failed computation. Exit code 1.
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] equirank_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Treats a core validation failure as a usage error.
pub fn usage<T>(result: equirank_core::Result<T>) -> Result<T> {
    result.map_err(|e| CliError::Usage(e.to_string()))
}
