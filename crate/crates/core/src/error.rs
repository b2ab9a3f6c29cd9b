use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or unreadable input files.
    Parse,
    /// Inputs that are well-formed but violate a precondition.
    Spec,
    /// Non-finite values or a failed factorization.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("empty cluster: {0}")]
    EmptyCluster(String),

    #[error("affinity matrix is not symmetric (max deviation {0:e})")]
    AsymmetricInput(f64),

    #[error("point {0} has no observations")]
    EmptyTrajectory(u64),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("empty file: {0}")]
    EmptyFile(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Parse { .. } | Error::EmptyFile(_) | Error::Io { .. } => ErrorClass::Parse,
            Error::NumericalFailure(_) => ErrorClass::Numeric,
            _ => ErrorClass::Spec,
        }
    }

    /// Stable variant name for machine-readable reports.
    pub fn name(&self) -> &'static str {
        match self {
            Error::DegenerateData(_) => "DegenerateData",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::NumericalFailure(_) => "NumericalFailure",
            Error::EmptyCluster(_) => "EmptyCluster",
            Error::AsymmetricInput(_) => "AsymmetricInput",
            Error::EmptyTrajectory(_) => "EmptyTrajectory",
            Error::LengthMismatch(..) => "LengthMismatch",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::Parse { .. } => "ParseError",
            Error::EmptyFile(_) => "EmptyFile",
            Error::Io { .. } => "IoError",
        }
    }

    pub(crate) fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }
}

pub(crate) fn dims(m: &nalgebra::DMatrix<f64>) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}
