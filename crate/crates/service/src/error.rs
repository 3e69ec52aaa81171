use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error("no session {0}")]
    UnknownSession(String),
    #[error("{0}")]
    OutOfOrder(String),
    #[error("session has no trials left")]
    SessionFinished,
    #[error("trial {0} is not part of this session")]
    UnknownTrial(u32),
    #[error("trial {0} already has a result")]
    DuplicateSubmission(u32),
    #[error("invalid decision: {0}")]
    InvalidDecision(String),
    #[error("log replay failed: {0}")]
    Replay(String),
    #[error("storage error: {0}")]
    Io(String),
}

impl ServiceError {
    /// Stable machine-readable kind.
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::Config(_) => "ConfigError",
            ServiceError::UnknownSession(_) => "UnknownSession",
            ServiceError::OutOfOrder(_) => "OutOfOrder",
            ServiceError::SessionFinished => "SessionFinished",
            ServiceError::UnknownTrial(_) => "UnknownTrial",
            ServiceError::DuplicateSubmission(_) => "DuplicateSubmission",
            ServiceError::InvalidDecision(_) => "InvalidDecision",
            ServiceError::Replay(_) => "ReplayError",
            ServiceError::Io(_) => "IoError",
        }
    }
}
