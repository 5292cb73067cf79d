use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("no candidate satisfies the constraint (average accuracy >= {min_average})")]
    Infeasible { min_average: f64 },

    #[error("no coverage threshold is feasible")]
    NoFeasibleThreshold,

    #[error("search needs {required} evaluations, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u64 },

    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("{}: file is empty", path.display())]
    EmptyFile { path: PathBuf },

    #[error("{}:{line}: malformed row: {message}", path.display())]
    MalformedRow {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{}:{line}: expected {expected} columns, found {found}", path.display())]
    WidthMismatch {
        path: PathBuf,
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("{}:{line}: scores sum to {sum}, not within 1e-6 of 1", path.display())]
    SimplexViolation { path: PathBuf, line: u64, sum: f64 },

    #[error("feature file has {features} rows but prediction file has {predictions}")]
    RowCountMismatch { predictions: usize, features: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for outcomes that mean "nothing satisfied the request" rather than bad input.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Infeasible { .. } | Error::NoFeasibleThreshold)
    }
}
