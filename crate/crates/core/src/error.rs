use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty population")]
    EmptyPopulation,

    #[error("index {index} out of range for domain of size {domain}")]
    IndexOutOfRange { index: usize, domain: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("discount must be < 1 (got {0})")]
    InvalidDiscount(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("flow horizon {horizon} exceeded at t = {t}")]
    FlowHorizonExceeded { t: usize, horizon: usize },

    #[error("instance too large for oracle (budget of {budget} branches exhausted)")]
    OracleTooLarge { budget: u64 },

    #[error("non-finite gradient at inner step {step}")]
    NonFiniteGradient { step: usize },

    #[error("no valid sample pairs (every denominator was below threshold)")]
    NoValidSamples,

    #[error("serialization: {0}")]
    Serialization(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
