use std::path::PathBuf;

use thiserror::Error;

/// Failures reported by generation and embedding backends.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    /// Transport failure, or retry budget exhausted.
    #[error("backend `{backend}` unavailable: {reason}")]
    Unavailable { backend: String, reason: String },
    #[error("backend `{0}` returned an empty completion")]
    EmptyGeneration(String),
    #[error("backend `{backend}` sent a malformed response: {reason}")]
    Protocol { backend: String, reason: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] interrogate_core::Error),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("detection infeasible: {0}")]
    DetectionInfeasible(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Dataset {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
