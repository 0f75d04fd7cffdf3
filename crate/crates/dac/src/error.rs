use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum DacError {
    /// An input violated a documented invariant (non-stochastic row,
    /// mismatched dimensions, out-of-range coefficient, ...).
    #[error("invalid input: {0}")]
    Validation(String),

    /// A numerical routine failed to meet its contract (singular system,
    /// non-finite update, iteration cap exhausted).
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// Monotone-improvement contract of diverse policy iteration violated.
    #[error("policy iteration regressed: {0}")]
    Monotonicity(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, DacError>;

impl DacError {
    pub fn validation(msg: impl Into<String>) -> Self {
        DacError::Validation(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        DacError::Numeric(msg.into())
    }
}
