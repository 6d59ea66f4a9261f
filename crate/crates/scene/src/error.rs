use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SceneError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error(transparent)]
    Core(#[from] headsteer_core::Error),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scenario error ({path}): {message}")]
    Scenario { path: PathBuf, message: String },

    #[error("scenario value out of range: {0}")]
    OutOfRange(String),

    #[error("speech corpus is empty")]
    EmptyCorpus,

    #[error("corpus too short: talker {talker} needs {needed_s:.2} s, {available_s:.2} s left")]
    CorpusTooShort {
        talker: usize,
        needed_s: f64,
        available_s: f64,
    },

    #[error("zero-energy signal: {0}")]
    ZeroEnergy(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn geometry(msg: impl Into<String>) -> SceneError {
    SceneError::InvalidGeometry(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> SceneError {
    SceneError::InvalidArgument(msg.into())
}
