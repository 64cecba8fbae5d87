use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the autodiff engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffError {
    #[error("{op}: argument {value} outside domain")]
    Domain { op: &'static str, value: f64 },
    #[error("division by zero")]
    DivisionByZero,
    #[error("{op}: zero-norm vector")]
    ZeroNorm { op: &'static str },
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("node {0} is not on this tape")]
    StaleNode(u32),
    #[error("non-finite gradient at parameter {index}")]
    NonFiniteGradient { index: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("numeric abort: {0}")]
    Numeric(String),
    #[error("hypersphere collapse: center norm {center_norm:e}, embedding variance {variance:e}")]
    Collapse { center_norm: f64, variance: f64 },
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("model artifact: {0}")]
    Artifact(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by non-finite numbers or a collapsed model.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Numeric(_)
                | Error::Collapse { .. }
                | Error::Diff(DiffError::NonFiniteGradient { .. })
                | Error::Diff(DiffError::Domain { .. })
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
