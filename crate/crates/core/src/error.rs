use thiserror::Error;

/// Errors raised across the link pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid source model: {0}")]
    InvalidSource(String),
    #[error("token {token} out of range for alphabet of size {alphabet}")]
    TokenOutOfRange { token: u32, alphabet: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("bit count {0} is not a multiple of 4")]
    BitsNotMultipleOfFour(usize),
    #[error("noise variance must be positive, got {0}")]
    NonPositiveNoise(f64),
    #[error("bad block length: expected {expected}, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error("group count {groups} out of range for {positions} positions")]
    GroupCountOutOfRange { groups: usize, positions: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("infeasible budget: need at least {required} symbols, have {budget}")]
    InfeasibleBudget { required: f64, budget: f64 },
    #[error("invalid gate spec: {0}")]
    InvalidGateSpec(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
