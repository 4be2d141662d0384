use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("truncation inadequate at t = {time:.6}: tail weight {tail:.3e} exceeds limit {limit:.3e}")]
    Truncation { time: f64, tail: f64, limit: f64 },

    #[error("coherent amplitude |alpha|^2 = {norm_sq:.3} too large for basis size {dim}")]
    CoherentTooLarge { norm_sq: f64, dim: usize },

    #[error("non-finite amplitude at step {step}")]
    NumericalBlowup { step: u64 },

    #[error("uncertainty product {value} below 1/2 at t = {time:.6}")]
    UncertaintyFloor { time: f64, value: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("Lyapunov estimation failed: {0}")]
    EstimationFailure(String),

    #[error("master-equation oracle invariant violated at t = {time:.6}: {what}")]
    OracleFailure { time: f64, what: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown configuration keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short tag written into the `status` column of sweep tables.
    pub fn status_tag(&self) -> &'static str {
        match self {
            Error::Truncation { .. } | Error::CoherentTooLarge { .. } => "truncation",
            Error::NumericalBlowup { .. } => "blowup",
            Error::EstimationFailure(_) => "estimation-failure",
            Error::UncertaintyFloor { .. } => "uncertainty-floor",
            Error::InsufficientData(_) => "insufficient-data",
            _ => "error",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
