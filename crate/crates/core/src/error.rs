use std::path::PathBuf;

use thiserror::Error;

use crate::encoder::SafError;
use crate::tensor::TensorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors surfaced by the caption engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("feature file {path}: {source}")]
    Feature {
        path: PathBuf,
        #[source]
        source: SafError,
    },

    /// Malformed input data (caption files, feature files, configs).
    #[error("{0}")]
    Format(String),

    /// A value is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("checkpoint version mismatch: file has version {found}, expected {expected}")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    /// NaN/Inf showed up where finite numbers are required.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
