use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure category, used by front ends to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed or missing input: files, flags, shapes.
    BadInput,
    /// NaN/Inf, divergence or infeasible numerics.
    Numeric,
    /// An internal invariant check failed.
    Invariant,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic at offset 0: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("truncated payload at offset {offset}: need {needed} bytes, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("label {label} out of range at offset {offset}")]
    LabelOutOfRange { offset: usize, label: i64 },

    #[error("non-finite value in {context} at index {index}")]
    NonFiniteValue { context: String, index: usize },

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: String,
        expected: String,
        found: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("could not place {classes} class centers in {dim} dimensions after {attempts} attempts")]
    InfeasibleSeparation {
        classes: usize,
        dim: usize,
        attempts: usize,
    },

    #[error("non-finite gradient for tensor {tensor}")]
    NonFiniteGradient { tensor: String },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("empty input: {0}")]
    EmptyInput(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. }
            | Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::LabelOutOfRange { .. }
            | Error::ShapeMismatch { .. }
            | Error::InvalidArgument(_)
            | Error::InvalidConfig(_)
            | Error::EmptyInput(_) => ErrorKind::BadInput,
            Error::NonFiniteValue { .. }
            | Error::InfeasibleSeparation { .. }
            | Error::NonFiniteGradient { .. }
            | Error::Divergence { .. } => ErrorKind::Numeric,
            Error::Invariant(_) => ErrorKind::Invariant,
        }
    }

    pub(crate) fn shape(context: &str, expected: impl ToString, found: impl ToString) -> Self {
        Error::ShapeMismatch {
            context: context.to_string(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
