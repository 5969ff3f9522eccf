use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoseError {
    /// One or more input invariants were violated.
    #[error("invalid input: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no feasible design: {0}")]
    Infeasible(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("not supported: {0}")]
    Unsupported(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("trial not found: {0}")]
    NotFound(String),
    #[error("version conflict: {0}")]
    Conflict(String),
    #[error("storage error: {0}")]
    Storage(String),
}

impl RoseError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        RoseError::Validation(vec![msg.into()])
    }
}

pub type Result<T> = std::result::Result<T, RoseError>;
