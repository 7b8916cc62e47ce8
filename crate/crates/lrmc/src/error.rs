use thiserror::Error;

/// Errors produced by the completion library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("duplicate observation at ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },

    #[error("index ({row}, {col}) out of bounds for a {rows}x{cols} matrix")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no observed entries")]
    EmptyObservations,

    #[error("rank {k} out of range for a {rows}x{cols} matrix")]
    RankOutOfRange { k: usize, rows: usize, cols: usize },

    #[error("iterative SVD did not converge after {iterations} iterations")]
    SvdNonConvergence { iterations: usize },

    #[error("underdetermined core: {unknowns} unknowns but only {observations} observations")]
    UnderdeterminedCore {
        unknowns: usize,
        observations: usize,
    },

    #[error("empty spectrum: all singular values are zero")]
    EmptySpectrum,

    #[error(
        "quantization calibration cannot reach SNR {target}: achievable range is \
         [{achievable_low:.6}, {achievable_high:.6}]"
    )]
    CalibrationBracket {
        target: f64,
        achievable_low: f64,
        achievable_high: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error at line {line}: {message}")]
    Data { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
