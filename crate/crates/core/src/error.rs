use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("checksum mismatch: expected {expected}, found {found}")]
    Checksum { expected: String, found: String },
    #[error("unsupported format: {0}")]
    Format(String),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("judge protocol error: {0}")]
    Protocol(String),
    #[error("judge request timed out after {0} ms")]
    Timeout(u64),
    #[error("not supported: {0}")]
    Unsupported(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by bad input files, flags or configs rather than by
    /// a defect or numerical breakdown inside the toolkit.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Validation(_)
                | Error::Checksum { .. }
                | Error::Format(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::Unsupported(_)
                | Error::Degenerate(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
