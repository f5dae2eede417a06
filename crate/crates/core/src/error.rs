use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A desk-scale guardrail (matrix dimension, step count, ...) was exceeded.
    #[error("resource limit: {0}")]
    Resource(String),
    /// A numerical routine failed (non-convergence, indefinite matrix, ...).
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("input not found: {}", .0.display())]
    InputNotFound(PathBuf),
    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LabError {
    /// Short machine-readable tag used in error records.
    pub fn kind(&self) -> &'static str {
        match self {
            LabError::Domain(_) => "domain",
            LabError::Resource(_) => "resource",
            LabError::Numeric(_) => "numeric",
            LabError::Parse(_) => "parse",
            LabError::InputNotFound(_) => "input_not_found",
            LabError::Validation(_) => "validation",
            LabError::Io(_) => "io",
        }
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::Domain(msg.into()))
}
