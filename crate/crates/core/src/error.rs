use thiserror::Error;

use crate::conic::SolveStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("covariance is not positive semidefinite: {0}")]
    NotPsd(String),

    #[error("unknown weight family `{0}`")]
    UnknownWeightKind(String),

    #[error("model is not linear; use the sequential solver")]
    NonlinearModel,

    #[error("malformed conic program: {0}")]
    MalformedProgram(String),

    #[error("convex subproblem at iteration {iteration} ended with status {status:?}")]
    SubproblemFailed {
        iteration: usize,
        status: SolveStatus,
    },

    #[error("inconsistent scaling map: {0}")]
    Scaling(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
