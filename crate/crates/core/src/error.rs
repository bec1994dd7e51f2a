//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller supplied something structurally wrong (shape, range, missing field).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A linear-algebra operation hit a rank-deficient or indefinite matrix.
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    /// The objective callback returned NaN or an infinity.
    #[error("non-finite objective value {value} at iteration {iter}")]
    NonFiniteObjective { iter: usize, value: f64 },

    /// Backtracking exhausted its budget even along steepest descent.
    #[error("line search failed after {backtracks} backtracks at iteration {iter}")]
    LineSearchFailed { iter: usize, backtracks: usize },

    /// A cell of an input file did not parse.
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    /// Input data violated a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// Input is degenerate for the requested operation (e.g. all scores equal).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn degenerate_numeric(msg: impl Into<String>) -> Self {
        Error::NumericalDegeneracy(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True when the error points at bad user input rather than a numerical failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::Parse { .. }
                | Error::Validation(_)
                | Error::DegenerateInput(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}
