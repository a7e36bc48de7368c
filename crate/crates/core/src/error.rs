use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("timestamps must be strictly increasing (index {index}: {prev} then {next})")]
    NonMonotonicTime { index: usize, prev: f64, next: f64 },
    #[error("non-finite value at index {index}")]
    NonFiniteValue { index: usize },
    #[error("non-positive value {value} at index {index}")]
    NonPositiveValue { index: usize, value: f64 },
    #[error("times and values differ in length ({times} vs {values})")]
    LengthMismatch { times: usize, values: usize },
    #[error("series is empty")]
    EmptySeries,

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("series grids do not match")]
    GridMismatch,
    #[error("resource usage {usage} exceeds R_max {max} at index {index}")]
    ScheduleViolation { index: usize, usage: f64, max: f64 },

    #[error("time grid is not uniform (relative spacing deviation {deviation:.3e})")]
    NonUniformGrid { deviation: f64 },
    #[error("window {window} larger than series length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("invalid window/order: {0}")]
    InvalidOrder(String),
    #[error("derivative order {order} exceeds polynomial order {poly_order}")]
    OrderExceedsPoly { order: usize, poly_order: usize },
    #[error("LOESS span {span} covers fewer than 4 points of {len}")]
    SpanTooSmall { span: f64, len: usize },
    #[error("design matrix is ill-conditioned (normal-equation condition {condition:.3e})")]
    IllConditioned { condition: f64 },
    #[error("insufficient data: {needed} points needed, {got} available")]
    InsufficientData { needed: usize, got: usize },
    #[error("evaluation point {t} outside fitted range [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("capability must be positive (index {index}: {value})")]
    NonPositiveCapability { index: usize, value: f64 },

    #[error("need at least {needed} unmasked points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("at least 99 permutations required, got {0}")]
    TooFewPermutations(usize),
    #[error("series too short for detection: {got} points (minimum {needed})")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cell has no trials in one of its classes")]
    EmptyCell,
    #[error("sweep needs {cells} cells, budget is {budget}")]
    BudgetExceeded { cells: usize, budget: usize },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
