use thiserror::Error;

/// Errors produced by the reconstruction library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{what} must be positive (minimum found {min})")]
    NonPositive { what: &'static str, min: f64 },

    #[error("factorization failed, k may be an eigenvalue (condition estimate {cond:.3e})")]
    PossibleEigenvalue { cond: f64 },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("too few solutions: need at least {needed}, got {got}")]
    TooFewSolutions { needed: usize, got: usize },

    #[error("unsupported CGO direction: {0}")]
    UnsupportedDirection(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("[{stage}] {source}")]
    Stage { stage: &'static str, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Pipeline stage that failed, when tagged.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
