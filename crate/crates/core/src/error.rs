use thiserror::Error;

use crate::qasm::SourceDiagnostic;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("parse failed with {} diagnostic(s); first: {}", .0.len(), .0.first().map(|d| d.to_string()).unwrap_or_default())]
    Parse(Vec<SourceDiagnostic>),

    #[error("no solution within the threshold: {0}")]
    Infeasible(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
