//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a precondition (empty, too short, out of range, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Signal has no usable content for the operation (zero RMS, zero
    /// variance, zero band power).
    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    /// Tensor/segment shapes are incompatible; names the operation involved.
    #[error("shape mismatch in {primitive}: {details}")]
    Shape { primitive: String, details: String },

    /// Filter specification cannot be realized at the given sampling rate.
    #[error("invalid filter spec: {0}")]
    FilterSpec(String),

    /// Model specification is inconsistent with the requested architecture.
    #[error("invalid model spec: {0}")]
    ModelSpec(String),

    /// A `.npy` or manifest file does not match the supported format.
    #[error("format error: {0}")]
    Format(String),

    /// Non-finite value produced where finite math was required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Empirical mode decomposition could not proceed.
    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(primitive: &str, details: impl Into<String>) -> Self {
        Error::Shape {
            primitive: primitive.to_string(),
            details: details.into(),
        }
    }
}
