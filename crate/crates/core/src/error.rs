use alloc::string::String;

/// Errors raised by the allocation, lattice, and estimation routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("correlation matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("invalid correlation matrix: {0}")]
    InvalidCorrelation(String),

    #[error("volatility must be strictly positive (microgrid {index}, sigma = {sigma})")]
    DegenerateVolatility { index: usize, sigma: f64 },

    #[error("horizon must be positive, got {0}")]
    InvalidHorizon(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample {index} is not strictly positive ({value})")]
    NonPositiveSample { index: usize, value: f64 },

    #[error("series too short: need at least {min} points, got {len}")]
    SeriesTooShort { len: usize, min: usize },

    #[error("need at least 4 bins for a two-parameter fit, got {0}")]
    TooFewBins(usize),

    #[error("empty sample")]
    EmptySample,

    #[error("generation must be strictly positive, got {0}")]
    NonPositiveGeneration(f64),

    #[error("time {t} outside [0, {t_f}]")]
    TimeOutOfRange { t: f64, t_f: f64 },

    #[error("length mismatch: expected {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error(
        "lattice calibration infeasible: branch {branch} has probability {probability:.6}; \
         try dt <= {suggested_dt}"
    )]
    InfeasibleCalibration {
        branch: usize,
        probability: f64,
        suggested_dt: f64,
    },

    #[error("calibration did not converge after {iterations} iterations (residual {residual:e})")]
    CalibrationDiverged { iterations: usize, residual: f64 },

    #[error("tree of {nodes} nodes exceeds the node budget of {budget}")]
    TreeTooLarge { nodes: u128, budget: usize },

    #[error("malformed tree: {0}")]
    MalformedTree(String),

    #[error("significance level must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),

    #[error("no paths matched case filter {filter} after {attempts} attempts")]
    InsufficientPaths { filter: String, attempts: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
