//! Error type shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The band swallows the whole matrix, leaving no entry to fit.
    #[error("invalid band: half-band {half_band} with K = {k} leaves no off-band entries")]
    InvalidBand { half_band: usize, k: usize },

    #[error("insufficient data: need at least {needed} rows, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// Band fraction at or above 1/2: no resolution makes the split identifiable.
    #[error("unidentifiable regime: delta = {delta} must lie in (0, 1/2)")]
    Unidentifiable { delta: f64 },

    #[error("matrix not symmetric: max |A - A'| = {max_asym:.3e} exceeds {tol:.3e}")]
    NotSymmetric { max_asym: f64, tol: f64 },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Parse failure in a text input; positions are 1-based.
    #[error("{path}:{line}:{col}: {msg}")]
    Parse {
        path: String,
        line: usize,
        col: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
