use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] headsteer_core::Error),

    #[error(transparent)]
    Scene(#[from] headsteer_scene::SceneError),

    #[error("no decision frames to score")]
    EmptyDecisions,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::InvalidArgument(msg.into())
}
