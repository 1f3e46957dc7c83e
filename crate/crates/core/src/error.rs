use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index {index} out of range for scene of {len} Gaussians")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("scene is empty")]
    EmptyScene,

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("no Gaussians match prompt")]
    NoMatch,

    #[error("non-finite {term} loss at iteration {iteration}")]
    NonFinite { term: &'static str, iteration: usize },

    #[error("parse error in {context} at byte {offset}: {message}")]
    Parse {
        context: String,
        offset: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("camera {id}: {message}")]
    Camera { id: u32, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
