use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("derivative order {order} exceeds the configured maximum {max}")]
    UnsupportedOrder { order: usize, max: usize },

    #[error("degenerate environment: {0}")]
    DegenerateEnvironment(String),

    #[error("degenerate tilt: normalizer {normalizer:e} at generation {generation}")]
    DegenerateTilt { generation: usize, normalizer: f64 },

    #[error("resource limit: {what} reached {count} (cap {cap})")]
    Resource { what: &'static str, count: u64, cap: u64 },

    #[error("attempt budget of {cap} exhausted")]
    Budget { cap: u64 },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("invalid concatenation: {0}")]
    InvalidConcatenation(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("quadrature did not reach tolerance {tolerance:e} within {cap} panels (error estimate {estimate:e})")]
    Quadrature { tolerance: f64, estimate: f64, cap: usize },

    #[error("empty measure: {0}")]
    EmptyMeasure(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
