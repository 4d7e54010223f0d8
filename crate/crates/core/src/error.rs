use thiserror::Error;

/// Errors produced by estimation, optimization and data handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("curve is not finite at grid node z = {z}")]
    NonFiniteCurve { z: f64 },

    #[error("empty neighborhood: all kernel weights vanish at query {query:?}")]
    EmptyNeighborhood { query: Vec<f64> },

    #[error("empty neighborhood: all kernel weights vanish for covariate row {row} at z = {z}")]
    EmptyNeighborhoodRow { row: usize, z: f64 },

    #[error("design matrix is rank deficient at column {column}")]
    RankDeficient { column: usize },

    #[error("logistic fit diverged: complete or quasi-complete separation")]
    Separation,

    #[error("binary response contains a single class")]
    OneClass,

    #[error("{name} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("bootstrap draw {draw} failed after {attempts} attempts: {source}")]
    BootstrapFailed {
        draw: usize,
        attempts: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
