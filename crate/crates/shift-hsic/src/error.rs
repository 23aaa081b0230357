use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// All pairwise distances are zero (or the series has zero variance);
    /// no data-driven bandwidth or correlation exists. The caller must
    /// supply an explicit bandwidth or different data.
    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("input too large for brute-force path: n = {n}, maximum {max}")]
    TooLarge { n: usize, max: usize },

    #[error("shift {c} out of range for series of length {n}")]
    InvalidShift { c: usize, n: usize },

    #[error("AR coefficient {a} is not stationary (|a| must be < 1)")]
    NonStationary { a: f64 },

    /// Rejection sampler exceeded its iteration cap (p = 1 with a huge radius).
    #[error("innovation generator stalled after {0} rejections")]
    GeneratorStall(u64),

    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },

    #[error("timestamps not strictly increasing at line {line}")]
    OrderError { line: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("series too short: need at least {need}, got {got}")]
    TooShort { need: usize, got: usize },

    #[error("aligned series have no overlapping time range")]
    NoOverlap,

    #[error("regression design matrix is rank deficient")]
    SingularDesign,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
