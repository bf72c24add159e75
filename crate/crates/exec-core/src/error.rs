//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model construction, solvers, the filter, and the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside a function's domain (negative trade size,
    /// non-positive intensity, horizon shorter than a step, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Model validation failed. Every violation found is listed, not just the first.
    #[error("invalid model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),

    /// A truncated size distribution leaves too much probability mass
    /// beyond its cutoff.
    #[error("truncation error: {0}")]
    Truncation(String),

    /// A numeric guard tripped mid-computation (degenerate belief flow,
    /// zero observation likelihood, non-finite value, failed cross-check).
    #[error("numeric guard: {0}")]
    NumericGuard(String),

    /// Inconsistent run configuration (mismatched grids, incompatible
    /// policy/simulation flags, unsupported arguments).
    #[error("configuration error: {0}")]
    Config(String),

    /// Artifact I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Malformed JSON in a model or run configuration.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
