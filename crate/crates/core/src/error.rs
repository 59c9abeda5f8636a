use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty frame stack")]
    EmptyFrames,

    #[error("not a palette index: {0}")]
    NotPaletteIndex(usize),

    #[error("invalid palette file, line {line}: {reason}")]
    PaletteFile { line: usize, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("token id {id} out of range (vocabulary size {vocab})")]
    TokenOutOfRange { id: usize, vocab: usize },

    #[error("malformed token stream at offset {offset}: {reason}")]
    MalformedStream { offset: usize, reason: String },

    #[error("corpus decode error at byte {offset}: {reason}")]
    Corrupt { offset: usize, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward called without a cached forward pass")]
    NoForwardCache,

    #[error("wrong mode: {0}")]
    WrongMode(&'static str),

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("system sampling failed after {0} consecutive rejections")]
    SamplingFailed(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(offset: usize, reason: impl Into<String>) -> Self {
        Error::Corrupt {
            offset,
            reason: reason.into(),
        }
    }

    pub(crate) fn malformed(offset: usize, reason: impl Into<String>) -> Self {
        Error::MalformedStream {
            offset,
            reason: reason.into(),
        }
    }
}
