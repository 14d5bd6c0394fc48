//! Error type shared by every estimator, test and simulator in the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("dates out of order at row {row}: {date} does not follow {previous}")]
    Ordering { row: usize, date: String, previous: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("season keeps no rows (months {months:?})")]
    EmptySeason { months: Vec<u32> },

    #[error("panel has no non-missing observations")]
    EmptyPool,

    #[error("{what} = {value} outside valid range {range}")]
    Range {
        what: &'static str,
        value: String,
        range: String,
    },

    #[error("station index {index} out of range for a panel with {stations} stations")]
    StationIndex { index: usize, stations: usize },

    #[error("station {station} has no exceedance of the pooled threshold at k = {k}")]
    NoExceedance { station: usize, k: usize },

    #[error(
        "reduced covariance matrix is numerically singular (condition number {condition:.3e}); \
         near-duplicate stations: {stations:?}"
    )]
    Singular {
        condition: f64,
        stations: Vec<(usize, usize)>,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("optimizer did not converge after {iterations} iterations: {reason} (trace: {trace})")]
    NonConvergence {
        iterations: usize,
        reason: String,
        trace: String,
    },

    #[error("quadrature did not reach tolerance {tolerance:e} (achieved error estimate {achieved:e})")]
    Quadrature { tolerance: f64, achieved: f64 },

    #[error("invalid simulation spec: {0}")]
    Spec(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Name of the component the error originates from.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Parse { .. } | Error::Ordering { .. } | Error::EmptySeason { .. } | Error::Io(_) => "panel",
            Error::Domain(_) => "panel",
            Error::EmptyPool | Error::Range { .. } => "tail_processes",
            Error::StationIndex { .. } => "scedasis",
            Error::NoExceedance { .. } | Error::Singular { .. } => "tests",
            Error::InsufficientData(_) | Error::NonConvergence { .. } | Error::Quadrature { .. } => "gp_mle",
            Error::Spec(_) => "mc",
        }
    }

    /// Short remedy suggestion shown by the command line front end.
    pub fn hint(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "check the CSV header and that every cell is a number or empty",
            Error::Ordering { .. } => "sort the input by date and remove duplicate dates",
            Error::Domain(_) => "rainfall amounts must be finite and non-negative",
            Error::EmptySeason { .. } => "choose months that occur in the input",
            Error::EmptyPool => "the input contains no usable observations",
            Error::Range { .. } => "choose k between 1 and the number of non-missing observations",
            Error::StationIndex { .. } => "station indices are 1-based and must not exceed the station count",
            Error::NoExceedance { .. } => "increase k so that the station has exceedances",
            Error::Singular { .. } => "remove one of each pair of duplicated stations",
            Error::InsufficientData(_) => "increase k",
            Error::NonConvergence { .. } => "try a different k; the excesses may be degenerate",
            Error::Quadrature { .. } => "relax the tolerance or check the dependence model",
            Error::Spec(_) => "fix the simulation spec JSON",
            Error::Io(_) => "check file paths and permissions",
        }
    }
}

pub(crate) fn range_err(what: &'static str, value: impl ToString, range: impl ToString) -> Error {
    Error::Range {
        what,
        value: value.to_string(),
        range: range.to_string(),
    }
}
