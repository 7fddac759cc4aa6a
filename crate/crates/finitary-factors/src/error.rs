//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("enumeration guard exceeded: {0}")]
    GuardExceeded(String),

    #[error("unknown symbol index {index} for alphabet of size {alphabet}")]
    UnknownSymbol { index: usize, alphabet: usize },

    #[error("configuration window too small: site {site:?} not defined")]
    InsufficientWindow { site: Vec<i64> },

    #[error("invalid marginal: {0}")]
    InvalidMarginal(String),

    #[error("invalid code specification: {0}")]
    InvalidCode(String),

    #[error("coordinate overflow while constructing a neighborhood")]
    CoordinateOverflow,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("internal invariant failed: {0}")]
    Internal(String),
}

impl Error {
    /// True for errors caused by bad inputs or violated operation
    /// preconditions, as opposed to internal failures.
    pub fn is_precondition(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Json(_) | Error::Internal(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
