use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Fock cutoff {required} exceeds the configured hard maximum {hard_max}")]
    CutoffOverflow { required: usize, hard_max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cutoff mismatch: state has cutoff {state}, operator expects {operator}")]
    CutoffMismatch { state: usize, operator: usize },

    #[error("mass tolerance {tolerance:e} unreachable: omitted mass {omitted:e} at range cap {cap}")]
    MassToleranceUnreachable {
        tolerance: f64,
        omitted: f64,
        cap: usize,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("outcome {0} lies outside the modeled support")]
    OutsideSupport(i64),

    #[error("phase estimate out of range: |x̄|/(√2·amplitude) = {ratio}")]
    PhaseOutOfRange { ratio: f64 },

    #[error("insufficient angular coverage: {0}")]
    InsufficientCoverage(String),

    #[error("numerical tolerance violated: {0}")]
    Tolerance(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
