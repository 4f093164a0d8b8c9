use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the audit pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("unparseable date {value:?} on line {line}")]
    BadDate { value: String, line: u64 },
    #[error("duplicate month {month} on line {line}")]
    DuplicateMonth { month: String, line: u64 },
    #[error("column {0:?} not found in header")]
    MissingColumn(String),
    #[error("empty selection: {0}")]
    EmptySelection(String),
    #[error("series index mismatch: {0}")]
    IndexMismatch(String),
    #[error("insufficient observations: {0}")]
    InsufficientData(String),
    #[error("rank-deficient design matrix (column {column})")]
    RankDeficient { column: usize },
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("degenerate (constant) series: {0}")]
    Constant(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported deterministic specification: {0}")]
    UnsupportedSpec(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::RankDeficient { .. } | Error::Singular(_))
    }
}
