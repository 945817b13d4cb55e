//! Error type shared by the whole crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed XML input, with 1-based position of the offending text.
    #[error("parse error at {line}:{col}: {msg}")]
    Parse { line: u32, col: u32, msg: String },

    /// Well-formed XML that violates the planogram schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// Scene file that violates the scene format contract.
    #[error("format error: {0}")]
    Format(String),

    /// Invalid synthesis specification.
    #[error("spec error: {0}")]
    Spec(String),

    /// Eigensolver failed to converge; carries the last relative residual.
    #[error("numerical error: power iteration residual {residual:e} after {iterations} iterations")]
    Numerical { residual: f64, iterations: usize },

    /// No recurring patterns were detected anywhere in the scene.
    #[error("no products detected in the scene")]
    EmptyDetection,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
