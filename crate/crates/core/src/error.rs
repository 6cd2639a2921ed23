//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no legal action: mask has no set bits")]
    NoLegalAction,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("infinite divergence: q is zero where p > 0 (index {0})")]
    InfiniteDivergence(usize),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("design out of range: {0}")]
    DesignOutOfRange(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("digest mismatch: stored {stored:016x}, computed {computed:016x}")]
    DigestMismatch { stored: u64, computed: u64 },
    #[error("interval {interval} unreachable after {attempts} sampling attempts")]
    IntervalUnreachable { interval: usize, attempts: usize },
    #[error("constraints infeasible: {0}")]
    ConstraintInfeasible(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
