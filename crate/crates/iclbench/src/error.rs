//! Crate-wide error type.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Table dimensions disagree with the MDP (or with each other).
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A caller-supplied value is outside its documented domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A probability table failed validation (negative mass or bad row sum).
    #[error("invalid probability table: {0}")]
    Probability(String),

    /// A constraint-set descriptor describes an empty set, or a restriction
    /// made it empty.
    #[error("infeasible constraint set: {0}")]
    Infeasible(String),

    /// Input is structurally degenerate (e.g. an all-zero difference matrix).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Run configuration failed validation.
    #[error("config error: {0}")]
    Config(String),

    /// A pipeline stage failed after configuration was accepted.
    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
