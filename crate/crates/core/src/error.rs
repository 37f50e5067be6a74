use std::path::PathBuf;

use thiserror::Error;

/// Every fallible operation in the crate returns this error.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {what} expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{what} {value:?} lies outside its admissible set {lower:?}..{upper:?}")]
    OutOfBounds {
        what: &'static str,
        value: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },

    #[error("model `{0}` is not control-affine")]
    NotControlAffine(String),

    #[error("rejected configuration: {0}")]
    Rejected(String),

    #[error("deployment rejected: {0}")]
    DeploymentRejected(String),

    #[error("search budget exceeded: {needed} rollouts needed, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("config error in {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("malformed value grid file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        })
    }
}
