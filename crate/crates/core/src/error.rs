use std::fmt;

use crate::dual::DualSolution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("treatment arm {0} has no rows")]
    EmptyArm(usize),

    #[error("singular design matrix when fitting treatment {treatment}")]
    SingularDesign { treatment: usize },

    #[error("{0} adjustment requires a propensity model")]
    MissingPropensity(crate::estimators::Adjustment),

    #[error("single treatment present in data; propensity fitting needs at least two")]
    SingleTreatment,

    #[error("non-finite score at row {row}, treatment {treatment}")]
    NonFinite { row: usize, treatment: usize },

    #[error("invalid fairness spec: {0}")]
    InvalidFairness(String),

    #[error("unknown group {0:?}")]
    UnknownGroup(String),

    #[error("dual solve stopped after {iterations} cuts with gap {gap_bound:e} above tolerance {tolerance:e}")]
    NotConverged {
        best: Box<DualSolution>,
        gap_bound: f64,
        tolerance: f64,
        iterations: usize,
    },

    #[error("dual unbounded: {0}")]
    DualUnbounded(String),

    #[error("oracle scale exceeded: {0}")]
    OracleScale(String),

    #[error("schema version mismatch: expected {expected}, found {found}")]
    SchemaVersion { expected: u32, found: u64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("covariate trace exhausted at day {0}")]
    TraceExhausted(f64),

    #[error("missing outcome: {0}")]
    MissingOutcome(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl fmt::Display) -> Self {
        Error::InvalidInput(msg.to_string())
    }

    pub(crate) fn dims(msg: impl fmt::Display) -> Self {
        Error::DimensionMismatch(msg.to_string())
    }
}
