use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("unsupported state version {found} (expected {expected})")]
    Version { found: String, expected: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("dense core of {cells} cells exceeds the limit of {limit}")]
    CoreTooLarge { cells: u128, limit: u128 },

    /// Raised by a sample sink to stop a chain early.
    #[error("chain stopped at iteration {0}")]
    Interrupted(u64),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: impl std::fmt::Display, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            file: file.to_string(),
            line,
            msg: msg.into(),
        }
    }
}
