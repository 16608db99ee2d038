use thiserror::Error;

/// Errors raised by the simulator and the analysis drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of range: {what} = {value} (valid range {lo}..={hi})")]
    Index {
        what: &'static str,
        value: usize,
        lo: usize,
        hi: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported nonlinearity: {0}")]
    UnsupportedNonlinearity(String),

    #[error("Newton iteration did not converge at t = {time}: residual history {trace:?}")]
    NewtonFailure { time: f64, trace: Vec<f64> },

    #[error("{what} did not converge in {iterations} iterations: residual history {trace:?}")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        trace: Vec<f64>,
    },

    #[error(
        "energy increased by {increase:.3e} (> {tol:.3e}) in one step at t = {time}; reduce dt"
    )]
    Instability { time: f64, increase: f64, tol: f64 },

    #[error("step failed at t = {time}: {source}")]
    StepFailed {
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("format version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint does not match the run configuration: {0}")]
    CheckpointMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
