//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform to an op's contraction/broadcast rules.
    #[error("shape mismatch in {op}: {details}")]
    ShapeMismatch { op: &'static str, details: String },

    /// An op produced NaN or Inf. Training steps abort rather than propagate.
    #[error("non-finite values produced by {op}{context}")]
    NonFinite { op: &'static str, context: String },

    /// Invalid configuration (hyperparameters, architecture sizes, flags).
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Invalid runtime input to an operation (bad mask plan, label range, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Dataset construction or parsing failure.
    #[error("data error: {0}")]
    Data(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(op: &'static str, details: impl Into<String>) -> Self {
        Error::ShapeMismatch { op, details: details.into() }
    }

    pub fn non_finite(op: &'static str) -> Self {
        Error::NonFinite { op, context: String::new() }
    }

    /// True for failures of numeric origin (NaN/Inf, degenerate math).
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite { .. })
    }

    /// True for dataset/parsing failures.
    pub fn is_data(&self) -> bool {
        matches!(self, Error::Data(_) | Error::Csv(_))
    }
}
