//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("probability vector must be nonempty")]
    EmptyDistribution,

    #[error("probability vector sums to {sum:.17}, expected 1 within {tol:e}")]
    DistributionSum { sum: f64, tol: f64 },

    #[error("probability entry {value} at position {index} is negative or not finite")]
    InvalidProbability { index: usize, value: f64 },

    #[error("reward mean {value} outside [0, 1]")]
    RewardMeanRange { value: f64 },

    #[error("reward {value} outside [0, 1]")]
    RewardRange { value: f64 },

    #[error("context {context} out of range for {num_contexts} contexts")]
    ContextOutOfRange { context: usize, num_contexts: usize },

    #[error("arm {arm} out of range for {num_arms} arms")]
    ArmOutOfRange { arm: usize, num_arms: usize },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("dataset exhausted after {rows} rows")]
    DatasetExhausted { rows: usize },

    #[error("behavior probability must be positive, got {value}")]
    NonPositiveProbability { value: f64 },

    #[error("invalid parameter {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),

    #[error("divergence weights are all unbounded; bounded-divergence assumption violated")]
    UnboundedDivergence,

    #[error("gap profile must be sorted ascending in [0, 1] with a leading zero")]
    InvalidGapProfile,

    #[error("gap at sorted position {index} must be positive, got {value}")]
    ZeroGap { index: usize, value: f64 },

    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for configuration/input problems (CLI exit code 2), false for IO (exit code 3).
    pub fn is_config_error(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Csv(_))
    }
}
