use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: expected {expected} columns, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}, column {column}: cannot parse {token:?} as a number")]
    Unparsable {
        line: usize,
        column: usize,
        token: String,
    },

    #[error("line {line}, column {column}: non-finite value {token:?}")]
    NonFinite {
        line: usize,
        column: usize,
        token: String,
    },

    #[error("line {line}: label {token:?} is not a nonnegative integer")]
    NonIntegerLabel { line: usize, token: String },

    #[error("no data rows")]
    Empty,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("system is singular to working precision (smallest pivot {pivot:e})")]
    Singular { pivot: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training point {index} has zero degree")]
    IsolatedPoint { index: usize },

    #[error("query point has no training neighbor; projection impossible")]
    IsolatedQuery,

    #[error("retained eigenvalue {index} is {value:e}, too close to zero")]
    ZeroEigenvalue { index: usize, value: f64 },

    #[error("row {row}: {source}")]
    AtRow {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_row(row: usize, err: Error) -> Self {
        Error::AtRow {
            row,
            source: Box::new(err),
        }
    }

    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }
}
