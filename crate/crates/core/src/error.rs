use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{0}: non-finite value")]
    NonFinite(&'static str),
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("svd did not converge for a {rows}x{cols} matrix")]
    NoConvergence { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("linear solve residual {residual:e} exceeds bound {bound:e}")]
    ResidualTooLarge { residual: f64, bound: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("center set not fundamental: rank {achieved} of {required} after {attempts} attempts")]
    RankDeficient {
        achieved: usize,
        required: usize,
        attempts: usize,
    },
    #[error("n = {centers} > m = {samples}: more centers than samples")]
    Underdetermined { centers: usize, samples: usize },
    #[error("parameter grid is empty")]
    EmptyGrid,
    #[error("every candidate failed: {}", .0.join("; "))]
    AllCandidatesFailed(Vec<String>),
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("file is empty: {}", .0.display())]
    EmptyFile(PathBuf),
    #[error("row {row}: expected {expected} columns, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    NonNumeric {
        row: usize,
        column: usize,
        value: String,
    },
    #[error("need at least 2 columns (features and a target), found {found}")]
    TooFewColumns { found: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_) | Error::EmptyGrid | Error::Underdetermined { .. } => {
                ErrorKind::Usage
            }
            Error::MissingFile(_)
            | Error::EmptyFile(_)
            | Error::RaggedRow { .. }
            | Error::NonNumeric { .. }
            | Error::TooFewColumns { .. }
            | Error::Csv(_)
            | Error::Io(_)
            | Error::DimensionMismatch { .. }
            | Error::Empty(_) => ErrorKind::Data,
            Error::NonFinite(_)
            | Error::NoConvergence { .. }
            | Error::NotSymmetric { .. }
            | Error::ResidualTooLarge { .. }
            | Error::Overflow(_)
            | Error::RankDeficient { .. }
            | Error::AllCandidatesFailed(_) => ErrorKind::Numerical,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
