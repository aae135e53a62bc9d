//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two operands have incompatible shapes for the named operation.
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A single tensor has the wrong shape or rank for the named operation.
    #[error("{op}: invalid shape {shape:?} ({reason})")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: String,
    },

    /// A mask or attend matrix contained values outside {0, 1}.
    #[error("{op}: mask entry at index {index} is {value}, expected 0 or 1")]
    InvalidMask {
        op: &'static str,
        index: usize,
        value: f64,
    },

    /// A computation produced NaN or Inf.
    #[error("non-finite values in {context}")]
    NonFinite { context: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("horizon {horizon} out of range 1..={t_future}")]
    HorizonOutOfRange { horizon: usize, t_future: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// A binary file starts with the wrong magic or an unparseable header.
    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: String, reason: String },

    /// A binary file ended before its declared payload.
    #[error("truncated payload in {path}: expected {expected} bytes, got {got}")]
    TruncatedPayload {
        path: String,
        expected: u64,
        got: u64,
    },

    /// Declared dimensions exceed what can be allocated or addressed.
    #[error("dimension overflow in {path}: {reason}")]
    DimensionOverflow { path: String, reason: String },

    #[error("checkpoint error in {path}: {reason}")]
    Checkpoint { path: String, reason: String },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }
}
