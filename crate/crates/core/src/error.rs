use thiserror::Error;

/// Errors surfaced by every stage of the augmentation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("exponential mapping overflows: |a*v| = {0} exceeds 700")]
    ExpOverflow(f64),

    #[error("request timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("generation service unreachable: {0}")]
    Unreachable(String),

    #[error("malformed service response: {0}")]
    MalformedResponse(String),

    #[error("service not ready: {0}")]
    NotReady(String),

    #[error("no sampling ratio produced a valid iteration")]
    NoValidRatio,

    #[error("png: {0}")]
    Png(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn mismatch(expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
