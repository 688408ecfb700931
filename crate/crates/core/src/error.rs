use std::path::PathBuf;

use crate::training::TrainHistory;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not a bijection: {0}")]
    NotBijective(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{path}: malformed file at byte {offset}: {msg}")]
    Format { path: PathBuf, offset: u64, msg: String },

    /// Training produced a non-finite loss or gradient. The history up to
    /// the failing step is kept for inspection.
    #[error("training diverged at step {step}: {msg}")]
    Diverged {
        step: usize,
        msg: String,
        history: Box<TrainHistory>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
