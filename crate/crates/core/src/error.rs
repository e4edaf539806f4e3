use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate state: amplitude vector has zero norm")]
    DegenerateState,

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("integration diverged at t = {t}")]
    IntegrationDiverged { t: f64 },

    #[error("eigen-solver failure: {0}")]
    EigenSolver(String),

    #[error("not symmetric")]
    NotSymmetric,

    #[error("unphysical correlation (‖u‖₂ = {norm} > 1)")]
    UnphysicalCorrelation { norm: f64 },

    #[error("optimal phase undefined (|Θ| = {magnitude:e})")]
    OptimalPhaseUndefined { magnitude: f64 },

    #[error("invalid correlation: covariance eigenvalue {min_eigenvalue:e} is negative")]
    InvalidCorrelation { min_eigenvalue: f64 },

    #[error("step diverged; reduce dt (step {step})")]
    StepDiverged { step: usize },

    #[error("drift undefined at zero concurrence")]
    DriftUndefined,

    #[error("record/config mismatch: {0}")]
    RecordMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("trajectory {index} (seed {seed}, stream {stream}) failed: {source}")]
    TrajectoryFailed {
        index: usize,
        seed: u64,
        stream: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
