use thiserror::Error;

/// Errors produced by the samplers, estimators and verifiers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point {0} lies outside the window")]
    OutsideWindow(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("too few events: {got} observed, at least {needed} required ({hint})")]
    InsufficientSamples {
        got: usize,
        needed: usize,
        hint: String,
    },

    #[error("accuracy failure: {0}")]
    Accuracy(String),

    #[error("statistical failure: {0}")]
    Statistical(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
