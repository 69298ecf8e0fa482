use thiserror::Error;

use crate::control_care::ControlCareSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range for {len} modes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("chain is not ergodic: {0}")]
    NotErgodic(String),

    #[error("invalid initial mode {mode} for a {modes}-mode channel")]
    InvalidInitialMode { mode: usize, modes: usize },

    #[error("invalid channel: {}", .0.join("; "))]
    InvalidChannel(Vec<String>),

    #[error("invalid model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),

    #[error("SingularBtilde: control never delivered from successors of actuation mode {mode}")]
    SingularBtilde { mode: usize },

    #[error("SingularRtilde: innovation covariance singular in sensing mode {mode}")]
    SingularRtilde { mode: usize },

    #[error("NotConverged: {iterations} iterations, last residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("NonStabilizing: solution found but spectral radius {rho} >= 1")]
    NonStabilizing {
        rho: f64,
        solution: Box<ControlCareSolution>,
    },

    #[error("NoInitialGain: no mean-square detecting filter gain found (best radius {best_rho})")]
    NoInitialGain { best_rho: f64 },

    #[error("ConvergenceFailure: {0}")]
    ConvergenceFailure(String),

    #[error("HypothesisNotSatisfied: {0}")]
    HypothesisNotSatisfied(String),

    #[error("InsufficientTrials: need at least {needed}, got {got}")]
    InsufficientTrials { needed: usize, got: usize },
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
