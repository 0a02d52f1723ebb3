use thiserror::Error;

/// Errors raised by the game primitives, solvers and serializers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{matrix} row {row} sums to {sum}, expected 1")]
    NonStochasticRow {
        matrix: String,
        row: usize,
        sum: f64,
    },
    #[error("{matrix} entry [{row}][{col}] is {value}")]
    NegativeEntry {
        matrix: String,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid belief: {0}")]
    InvalidBelief(String),
    #[error("observation sequence has zero likelihood under the current belief")]
    ZeroLikelihood,
    #[error("signal {signal} is inconsistent with sender action {action}")]
    SignalActionMismatch { signal: String, action: u8 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("grid with {points} points exceeds the cap of {cap}")]
    ResolutionTooLarge { points: u128, cap: usize },
    #[error("invalid game parameters: {0}")]
    InvalidParams(String),
    #[error("greedy region contains grid point {index} outside the opponent region")]
    OracleViolation { index: usize },
    #[error("strategy enumeration needs {profiles} profiles, above the limit of {limit}")]
    EnumerationTooLarge { profiles: u128, limit: u128 },
    #[error("malformed table: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
