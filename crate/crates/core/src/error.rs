use thiserror::Error;

use crate::fluid::PiecewiseLinearTrajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Repeated event gaps below the forward-step guard.
    #[error("zeno guard tripped at t={t}: {tiny_steps} consecutive event gaps below {guard}")]
    Zeno { t: f64, tiny_steps: usize, guard: f64 },

    /// The integrator hit its event cap. The partial trajectory is kept.
    #[error("event cap of {cap} exceeded")]
    EventCap {
        cap: usize,
        partial: Box<PiecewiseLinearTrajectory>,
    },

    #[error("nonnegativity violated at t={t}: coordinate {coord} has drift {drift} at value {value}")]
    Nonnegativity {
        t: f64,
        coord: usize,
        value: f64,
        drift: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("arrival plan covers {covered} slots, {requested} requested")]
    PlanTooShort { covered: u64, requested: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
