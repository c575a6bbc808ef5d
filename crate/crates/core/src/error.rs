use thiserror::Error;

/// Errors raised by the test engine, the bootstrap and the simulation lab.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("series too short: need at least {need} observations, got {got}")]
    SeriesTooShort { need: usize, got: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("insufficient sample for lag order {p}: {available} usable rows, need {need}")]
    InsufficientSample { p: usize, available: usize, need: usize },

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("degenerate penalty weight for column {column}: OLS estimate is (numerically) zero")]
    DegenerateWeight { column: usize },

    #[error("lagged level never activates on the computed solution path")]
    LevelNeverActivates,

    #[error("enrichment unavailable: no enrichment provider registered")]
    EnrichmentUnavailable,

    #[error("residual sequence is identically zero")]
    AllZeroResiduals,

    #[error("detrending mismatch: statistic uses {statistic}, table uses {table}")]
    DetrendMismatch { statistic: String, table: String },

    #[error("{failed} of {total} bootstrap replicates failed (last error: {last})")]
    TooManyFailures {
        failed: usize,
        total: usize,
        last: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
