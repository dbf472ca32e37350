use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the embedding pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("shape mismatch: {left} vs {right}")]
    Shape { left: String, right: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("corrupt artifact {path}: {message}")]
    Corrupt { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(left: impl std::fmt::Display, right: impl std::fmt::Display) -> Self {
        Error::Shape {
            left: left.to_string(),
            right: right.to_string(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by non-finite values during training.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
