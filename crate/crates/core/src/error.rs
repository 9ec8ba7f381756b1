use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular matrix: {context}")]
    SingularMatrix { context: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("bad IDX magic number {found:#010x} (expected {expected:#010x})")]
    BadMagic { expected: u32, found: u32 },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("truncated file: {0}")]
    TruncatedFile(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("invalid class set: {0}")]
    InvalidClassSet(String),

    #[error("class {0} has no samples")]
    MissingClass(usize),

    #[error("class {class} out of range for {outputs} outputs")]
    InvalidClass { class: usize, outputs: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
