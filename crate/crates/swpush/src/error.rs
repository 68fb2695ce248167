use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid shape definition: {0}")]
    InvalidShape(String),

    #[error("unknown pushing point id {id} (shape has {count} points)")]
    InvalidPointId { id: usize, count: usize },

    #[error("episode already terminated; call reset before stepping")]
    EpisodeTerminated,

    #[error("training loss became non-finite at gradient step {step}")]
    NonFiniteLoss { step: u64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("empty trace: metrics require at least one pose")]
    EmptyTrace,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
