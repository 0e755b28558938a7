//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by decomposition, selection, video and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A scalar argument is outside its mathematical domain
    /// (e.g. `sigma2 <= 0`, or the objective requested at `alpha = 0`).
    #[error("domain error: {0}")]
    Domain(String),

    /// Structurally invalid data: non-finite entries, empty matrices,
    /// intensities outside `[0, 1]`, inconsistent frame shapes.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Arguments whose shapes do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Input lacks the structure the algorithm needs (e.g. an all-zero
    /// matrix passed to a decomposition entry point).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A candidate direction fell inside the span of the already extracted
    /// components; the decomposition cannot be extended past `achieved`.
    #[error("rank deficiency: residual lies in the span of the {achieved} extracted components")]
    RankDeficient { achieved: usize },

    /// Malformed file contents (CSV, binary matrix, PGM, model JSON).
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
