use thiserror::Error;

/// Failure reported by a black-box objective.
#[derive(Debug, Clone, Error)]
#[error("objective evaluation failed: {0}")]
pub struct ObjectiveError(pub String);

#[derive(Debug, Error)]
pub enum GtboError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric degeneracy: {0}")]
    Degenerate(String),
    #[error("gaussian process fit failed: {0}")]
    Fit(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T, E = GtboError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> GtboError {
    GtboError::InvalidArgument(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> GtboError {
    GtboError::Config(msg.into())
}
