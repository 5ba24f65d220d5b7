use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure classes surfaced by the estimation engine.
///
/// The variants are grouped so that front ends can map them onto exit
/// codes: [`Error::is_schema`] for malformed input, [`Error::is_hard_failure`]
/// for bootstrap breakdowns, everything else is a precondition failure.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("duplicate cell (unit {unit:?}, time {time:?}) in rows {first_row} and {second_row}")]
    DuplicateCell { unit: String, time: String, first_row: usize, second_row: usize },
    #[error("row {row}: treatment value {value:?} is not 0 or 1")]
    NonBinaryTreatment { row: usize, value: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("panel too small: {0}")]
    TooSmall(String),

    #[error("treatment collinear with fixed effects")]
    TreatmentCollinear,
    #[error("demeaning did not converge after {sweeps} sweeps (achieved tolerance {achieved:e})")]
    NonConvergence { sweeps: usize, achieved: f64 },
    #[error("need at least 2 clusters, found {0}")]
    TooFewClusters(usize),
    #[error("estimator requires a setting without treatment reversal (found {0})")]
    RequiresStaggered(String),
    #[error("no never-treated units available as comparison group")]
    NoNeverTreated,
    #[error("no switchers: treatment never changes")]
    NoSwitchers,
    #[error("carryover test requires treatment reversal")]
    NoExits,
    #[error("panel must be balanced and complete: {0}")]
    Unbalanced(String),
    #[error("covariance matrix has rank zero")]
    ZeroRank,
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("{failed} of {total} bootstrap replicates failed (>20%); redesign the estimator or the resampling scheme")]
    TooManyFailedReplicates { failed: usize, total: usize },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub fn is_schema(&self) -> bool {
        matches!(self, Error::DuplicateCell { .. } | Error::NonBinaryTreatment { .. } | Error::Schema(_) | Error::TooSmall(_))
    }

    pub fn is_hard_failure(&self) -> bool {
        matches!(self, Error::TooManyFailedReplicates { .. })
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Schema(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
