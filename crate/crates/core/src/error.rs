//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or argument values.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input data (labels, manifests, audio headers).
    #[error("format error: {0}")]
    Format(String),

    /// Parse failure at a known line of a text input.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Numeric failure: non-finite values, divergence, degenerate inputs.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Shape or length mismatch between coupled sequences/tensors.
    #[error("shape error: {0}")]
    Shape(String),

    /// Internal state misuse (e.g. backward without a recorded forward).
    #[error("state error: {0}")]
    State(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("WAV error: {0}")]
    Wav(#[from] hound::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
