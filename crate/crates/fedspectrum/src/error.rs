//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value failed validation. Carries the offending key.
    #[error("invalid config key `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },

    /// Pair placement could not satisfy the distance band inside the area.
    #[error("pair placement failed after {attempts} attempts (infeasible geometry)")]
    PlacementFailed { attempts: usize },

    /// Two vectors that must agree in length do not.
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// An aggregation was requested with no updates.
    #[error("no updates to aggregate")]
    EmptyUpdates,

    /// A CSV file failed to parse. Row numbers are 1-based and include the header.
    #[error("malformed CSV at row {row}: {reason}")]
    MalformedCsv { row: usize, reason: String },

    /// Generic argument violation for a public operation.
    #[error("{0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
