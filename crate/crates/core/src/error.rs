use thiserror::Error;

use crate::control::Refusal;

/// Errors raised by library operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("lattice sum diverges: n = {n} must exceed d/2 = {half_dim}")]
    DivergentSum { n: f64, half_dim: f64 },

    #[error("forcing evaluated at t = {t}, outside its horizon [0, {horizon}]")]
    ForcingOutOfRange { t: f64, horizon: f64 },

    #[error("time {t} outside trajectory domain [0, {end}]")]
    OutsideTrajectory { t: f64, end: f64 },

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("no certificate found: {0}")]
    NoCertificate(String),

    #[error(transparent)]
    Refused(#[from] Refusal),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
