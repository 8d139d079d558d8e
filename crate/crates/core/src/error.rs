//! Error types shared across the library.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-contract input (dimension mismatch, non-finite
    /// values, invalid parameter ranges).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The estimation problem itself is singular or numerically
    /// indistinguishable from singular (e.g. coincident targets).
    #[error("singular problem: {0}")]
    Singular(String),

    /// Array geometry that cannot support the requested quantity
    /// (collinear or coincident antennas, zero-variance axis).
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// A finite-difference probe failed while evaluating a gradient.
    #[error("gradient evaluation failed: {0}")]
    GradientEvaluation(String),

    /// Configuration file problems.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
