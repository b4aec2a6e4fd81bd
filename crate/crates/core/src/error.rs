use thiserror::Error;

/// Errors produced across generators, solvers, encoders and decoders.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("stability violation: {0}")]
    Stability(String),

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("encoding failed: {0}")]
    Encoding(String),

    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("tuning failed: {0}")]
    Tuning(String),

    #[error("feature-map mismatch: {0}")]
    FeatureMapMismatch(String),

    #[error("corrupt container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
