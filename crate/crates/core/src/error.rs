use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("mode index {mode} out of range for a {modes}-mode system")]
    ModeOutOfRange { mode: usize, modes: usize },

    #[error("occupation {occupation} of mode {mode} exceeds truncation of {levels} levels")]
    OutOfTruncation {
        mode: usize,
        occupation: usize,
        levels: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "parametric-oscillation regime: delta = {delta} rad/us does not exceed 2*sqrt(2)*g = {threshold} rad/us \
         (a quantum phase transition occurs below this threshold)"
    )]
    Regime { delta: f64, threshold: f64 },

    #[error("closed-form solution requires g1 == g2 (got g1 = {g1}, g2 = {g2})")]
    UnsupportedAsymmetry { g1: f64, g2: f64 },

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("impossible outcome: {0}")]
    ImpossibleOutcome(String),

    #[error("numerical nonconvergence: {0}")]
    NonConvergence(String),

    #[error("degenerate projection: in-subspace weight {weight:.3e} is below 1e-6")]
    DegenerateProjection { weight: f64 },

    #[error("error budget undefined: {0}")]
    BudgetUndefined(String),

    #[error("under-determined fit: {0}")]
    UnderDetermined(String),

    #[error("channel is not trace preserving: trace deviation {deviation:.3e}")]
    NotTracePreserving { deviation: f64 },

    #[error("I/O failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
