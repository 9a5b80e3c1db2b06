//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model construction, planning, and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// The model violates one or more structural invariants. Each entry is one
    /// self-contained problem so callers can report the full list.
    #[error("invalid MDP ({} problem{}):\n  {}", .0.len(), if .0.len() == 1 { "" } else { "s" }, .0.join("\n  "))]
    InvalidMdp(Vec<String>),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The box-constrained simplex has no feasible point. Signals corrupted
    /// inputs: consistent successor sets and counts always admit one.
    #[error("infeasible probability redistribution: {0}")]
    Infeasible(String),

    /// An operation was called outside its contract (e.g. committing a
    /// state-action pair that does not satisfy the update trigger).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
