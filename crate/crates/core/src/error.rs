use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("fitness of individual {0} has not been evaluated")]
    Unevaluated(u64),

    #[error("batch index {index} out of range for {len} training examples")]
    BatchIndex { index: usize, len: usize },

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    #[error("not enough members to draw {requested} parents from {available}")]
    NotEnoughParents { requested: usize, available: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("checkpoint {path} failed digest check (stored {stored}, computed {computed})")]
    DigestMismatch {
        path: PathBuf,
        stored: String,
        computed: String,
    },

    #[error("run aborted at generation {generation}: {message}")]
    Aborted { generation: usize, message: String },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
