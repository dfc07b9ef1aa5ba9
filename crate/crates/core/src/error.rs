use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad class of a failure, used by front ends to map errors onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular design matrix (rank {rank} < {cols} columns)")]
    SingularDesign { rank: usize, cols: usize },

    #[error("no convergence after {iterations} iterations (best rss {best_rss:e})")]
    NotConverged {
        iterations: usize,
        best: Vec<f64>,
        best_rss: f64,
    },

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("no data: {0}")]
    NoData(String),

    #[error("duplicate quote for date {date} and delivery month {month}")]
    DuplicateKey { date: String, month: String },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::Stage { source, .. } => source.class(),
            Error::Format(_)
            | Error::NoData(_)
            | Error::DuplicateKey { .. }
            | Error::NotFound(_)
            | Error::InsufficientData(_)
            | Error::DegenerateVariance(_)
            | Error::Json(_) => ErrorClass::Data,
            Error::Dimension(_)
            | Error::Parameter(_)
            | Error::SingularDesign { .. }
            | Error::NotConverged { .. }
            | Error::NotPsd { .. }
            | Error::Singular(_)
            | Error::Numerical(_) => ErrorClass::Numerical,
        }
    }
}
