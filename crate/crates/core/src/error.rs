use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("population is empty (all counts are zero)")]
    EmptyPopulation,

    #[error("age group {index} has zero population but later groups do not")]
    InteriorZeroGroup { index: usize },

    #[error("need at least 3 age groups, got {got}")]
    TooFewGroups { got: usize },

    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid value {value} at index {index}: {reason}")]
    InvalidValue {
        index: usize,
        value: f64,
        reason: &'static str,
    },

    #[error("distributions are not comparable: {0}")]
    Incomparable(String),

    #[error("survival probability of the last group must be < 1 (got {0})")]
    DegenerateLastGroup(f64),

    #[error("activation rate {value} at index {index} is below the minimum {min}")]
    ActivationTooSmall { index: usize, value: f64, min: f64 },

    #[error("free parameter {value} is outside the feasible interval [{lower}, {upper}]")]
    FreeParamOutOfRange { value: f64, lower: f64, upper: f64 },

    #[error("distribution is not monotone non-increasing (violations at groups {violations:?})")]
    NotModel1Eligible { violations: Vec<usize> },

    #[error("steady-state balance residual {residual:e} exceeds tolerance {tolerance:e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },

    #[error("steady state has a non-positive group at index {index}")]
    DegenerateSteadyState { index: usize },

    #[error("curve fit failed for every breakpoint")]
    CurveFitFailed,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Schema(String),

    #[error("csv error: {0}")]
    Csv(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.position() {
            Some(pos) => Error::Csv(format!("line {}: {}", pos.line(), e)),
            None => Error::Csv(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
