use thiserror::Error;

use crate::types::Shape;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: Shape, found: Shape },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("index {index} out of range 0..{len}")]
    Index { index: usize, len: usize },

    #[error("no valid entries to compute statistics over")]
    EmptyStatistics,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("missing key `{0}`")]
    MissingKey(String),

    #[error("invalid value for key `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },

    #[error("unsupported format: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(offset: usize, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(expected: Shape, found: Shape) -> Self {
        Error::ShapeMismatch { expected, found }
    }
}
