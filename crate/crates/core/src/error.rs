use alloc::string::String;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Everything the numerical core can reject.
///
/// Variants split into two families: validation failures (bad input shape,
/// unknown keys, degenerate samples) and numerical failures (non-finite
/// values, loss of positive definiteness). [`Error::is_numerical`] tells
/// them apart so front ends can map them to different exit codes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("document {id} is empty after preprocessing")]
    EmptyDocument { id: String },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("duplicate date {0} in {1}")]
    DuplicateDate(NaiveDate, &'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{context}: dimension mismatch, expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("unknown term `{0}`")]
    UnknownTerm(String),

    #[error("topic {topic} out of range for a {k}-topic model")]
    TopicOutOfRange { topic: usize, k: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("{0} is rank deficient")]
    RankDeficient(&'static str),

    #[error("innovation covariance is not positive definite at date index {index}")]
    NotPositiveDefinite { index: usize },

    #[error("negative sufficient-statistic count in {0}")]
    NegativeCount(&'static str),

    #[error("zero-variance regressor: {0}")]
    ZeroVariance(String),

    #[error("every regressor was dropped for collinearity")]
    AllColumnsDropped,

    #[error("sample selection is empty")]
    EmptySample,

    #[error("statement dated {0} has no trading day on or after it")]
    UnmatchedStatementDate(NaiveDate),

    #[error("required maturity {0} months is absent from the panel")]
    MissingMaturity(u32),

    #[error("missing observation at date index {date}, maturity index {maturity}")]
    MissingObservation { date: usize, maturity: usize },
}

impl Error {
    /// True for failures of the numerics themselves rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::NotPositiveDefinite { .. }
                | Error::NegativeCount(_)
                | Error::RankDeficient(_)
        )
    }
}
