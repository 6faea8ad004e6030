//! Error types shared across the crate.

use thiserror::Error;

/// Everything that can go wrong while configuring or running the scheme.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates a precondition (bad sizes, out-of-range index,
    /// mismatched hash domains, duplicate evaluation points, ...).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A matrix cannot be split into the requested block grid.
    #[error("partition error: {0}")]
    Partition(String),

    /// A scheme-level configuration is inconsistent (e.g. fewer workers
    /// than the recovery threshold).
    #[error("configuration error: {0}")]
    Config(String),

    /// Decoding was attempted with fewer samples than the polynomial degree
    /// requires. `shortfall = needed - got`.
    #[error("insufficient samples: need {needed}, got {got} (short by {})", needed - got)]
    InsufficientSamples { needed: usize, got: usize },

    /// The decoded blocks kept a larger imaginary residue than the scale of
    /// the data justifies; the numerical pipeline cannot be trusted.
    #[error("numerical failure: imaginary residue {residue:.3e} exceeds tolerance {tolerance:.3e}")]
    NumericalFailure { residue: f64, tolerance: f64 },

    /// The simulator cannot deliver the requested number of results.
    #[error("starvation: requested {requested} results but only {available} workers survive")]
    Starvation { requested: usize, available: usize },

    /// Reading or writing matrices/reports failed.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A matrix or report file does not follow the expected format.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
