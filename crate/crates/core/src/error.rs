//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by numerics, quantization, adapters, models and file formats.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand geometries do not fit together.
    #[error("shape error: {0}")]
    Shape(String),

    /// A configuration value or distribution parameter is invalid.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Input data violates a value-level invariant (non-finite, code out of range, ...).
    #[error("data error: {0}")]
    Data(String),

    /// The requested operation is not defined for this configuration.
    #[error("capability error: {0}")]
    Capability(String),

    /// An object was used out of sequence, e.g. a tape from an older model state.
    #[error("state error: {0}")]
    State(String),

    /// A computation produced a non-finite value or failed a numeric check.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A serialized record is malformed.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
