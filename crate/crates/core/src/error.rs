use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = FlareError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FlareError {
    /// A caller broke an operation's precondition (shapes, lengths, empty inputs).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value in layer {layer}: {what}")]
    Numeric { layer: usize, what: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("deployment rejected: {0}")]
    Deployment(String),

    #[error("sensor has no deployed model")]
    NoModel,

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("normalization error: {0}")]
    Normalization(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FlareError {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        FlareError::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        FlareError::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FlareError::Io {
            path: path.into(),
            source,
        }
    }
}
