use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("history does not reach day {day} (earliest stored day is {earliest})")]
    InsufficientHistory { day: i64, earliest: i64 },

    #[error("day {day} is beyond the simulated horizon (last day {last})")]
    BeyondHorizon { day: i64, last: i64 },

    #[error("control schedule does not cover day {day} (covers {first}..={last})")]
    ControlGap { day: i64, first: i64, last: i64 },

    #[error("isolation time {tau} outside allowed range {min}..={max}")]
    TauOutOfRange { tau: u32, min: u32, max: u32 },

    #[error("kernel lag {lag} exceeds the tabulated maximum {max_lag}")]
    KernelTooShort { lag: usize, max_lag: usize },

    #[error("hospital window is empty: tau {tau} exceeds sigma {sigma}")]
    EmptyHospitalWindow { tau: u32, sigma: usize },

    #[error("dimension mismatch: expected {expected} {what}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-positive bed count {beds} for region {region} on day {day}")]
    NonPositiveBeds { region: usize, day: i64, beds: f64 },

    #[error("no cost model attached to the allocation problem")]
    MissingCostModel,

    #[error("no feasible allocation: cost constraint fails on days {days:?}")]
    NoFeasiblePoint { days: Vec<i64> },

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("malformed input at line {line}: {reason}")]
    Malformed { line: usize, reason: String },

    #[error("scenario is invalid:\n  {}", .0.join("\n  "))]
    Scenario(Vec<String>),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
