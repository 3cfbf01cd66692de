//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by the numerical routines, generators and harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MmclError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid rank {r}: expected 1..={max}")]
    InvalidRank { r: usize, max: usize },

    #[error("division by zero: {0}")]
    DivideByZero(String),

    #[error("invalid probability {0}: expected a value in [0, 1]")]
    InvalidProbability(f64),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("non-finite value encountered at iteration {iter}")]
    NonFinite { iter: usize },

    #[error("invalid cluster count k={k}: {reason}")]
    InvalidK { k: usize, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl MmclError {
    /// True for failures caused by the numbers themselves rather than by the
    /// caller's configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            MmclError::NonFinite { .. } | MmclError::DivideByZero(_) | MmclError::DegenerateData(_)
        )
    }

    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        MmclError::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

impl From<std::io::Error> for MmclError {
    fn from(e: std::io::Error) -> Self {
        MmclError::Io(e.to_string())
    }
}

impl From<csv::Error> for MmclError {
    fn from(e: csv::Error) -> Self {
        MmclError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for MmclError {
    fn from(e: serde_json::Error) -> Self {
        MmclError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, MmclError>;
