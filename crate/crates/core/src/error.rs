//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("averaging factor {o} does not divide m = {m}")]
    InvalidAveraging { m: usize, o: usize },
    #[error("invalid truncation level k = {k} (allowed 0..={max})")]
    InvalidTruncation { k: usize, max: usize },
    #[error("kernel mismatch: {0}")]
    KernelMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid ladder: {0}")]
    InvalidLadder(String),
    #[error("unsupported problem: {0}")]
    UnsupportedProblem(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
