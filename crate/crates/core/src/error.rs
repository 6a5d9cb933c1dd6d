//! Crate-wide error type.

use std::path::PathBuf;

/// Errors surfaced by the lab's public operations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("wav {path}: {detail}")]
    Wav { path: PathBuf, detail: String },

    #[error("invalid audio: {0}")]
    InvalidAudio(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("budget violated: {0}")]
    BudgetViolation(String),

    #[error("serialization: {0}")]
    Serialization(String),

    #[error("invariant breached: {0}")]
    Invariant(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
