//! Error type shared by every module of the crate.

use std::io;
use std::path::PathBuf;

/// Errors raised by the registration engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// A file could not be decoded. `offset` is the byte position where
    /// decoding failed.
    #[error("{message} (at byte {offset})")]
    Format { offset: usize, message: String },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("intensity out of range: {value} at index {index}")]
    IntensityOutOfRange { value: f64, index: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// The optimization produced a non-finite loss. Carries the trace
    /// recorded up to that point.
    #[error("numerical divergence at level {level}, iteration {iteration}: {what}")]
    Divergence {
        level: usize,
        iteration: usize,
        what: String,
        partial_history: Vec<crate::register::LossRecord>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}

pub(crate) fn check_shape(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, actual })
    }
}
