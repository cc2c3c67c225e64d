use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point is outside the operator domain at step {step:?}")]
    DomainViolation { step: Option<usize> },

    #[error("operator does not map its domain into itself: {0}")]
    DomainNotInvariant(String),

    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),

    #[error("operator is not nonexpansive: {0}")]
    NotNonexpansive(String),

    #[error("step-size product inf a(1-a) is not positive")]
    BetaDegenerate,

    #[error("error magnitude {eps} at n = {n} exceeds the envelope value {envelope}")]
    MonotonicityViolation { n: usize, eps: f64, envelope: f64 },

    #[error("forcing envelope is not nonincreasing near t = {t}")]
    H2Violation { t: f64 },

    #[error("local error {estimate:e} per unit time exceeds budget at t = {t}")]
    StepTooLarge { t: f64, estimate: f64 },

    #[error("table size {requested} exceeds the limit {limit}")]
    SizeLimit { requested: usize, limit: usize },

    #[error("series value at index {index} is not positive")]
    NonpositiveValue { index: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
