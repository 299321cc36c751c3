//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the sensing / localization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a mathematical precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A compiled path violates a channel precondition (CP or Doppler budget).
    #[error("path {index} invalid: {reason}")]
    InvalidPath { index: usize, reason: String },

    /// Dimension mismatch between matrices or streams.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Every spectrum cell was annihilated by the zero-forcing projector.
    #[error("spectrum grid fully masked by zero-forcing projector")]
    AllMasked,

    /// Two scatterer estimates have (numerically) identical steering vectors.
    #[error("steering vectors of estimates {first} and {second} are linearly dependent")]
    DuplicateSteering { first: usize, second: usize },

    /// Fewer anchors than the solver needs.
    #[error("insufficient anchors: have {have}, need {need}")]
    InsufficientAnchors { have: usize, need: usize },

    /// The anchor geometry leaves the linear system rank deficient.
    #[error("degenerate anchor geometry (condition number {condition:.3e})")]
    DegenerateGeometry { condition: f64 },

    /// Invalid experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// I/O failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Configuration file could not be parsed.
    #[error("failed to parse {path}: {source}")]
    ConfigParse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
