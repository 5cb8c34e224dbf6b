use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("measurement noise covariance D_d D_d^T is singular (det = {det:e})")]
    SingularMeasurementNoise { det: f64 },

    #[error(
        "delay {delay:e} s is not a multiple of step {step:e} s (snap error {snap_error:e} s exceeds {tolerance:e} s)"
    )]
    DelayGrid {
        delay: f64,
        step: f64,
        snap_error: f64,
        tolerance: f64,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("index {index} out of range for {len} samples")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("field requested from t = {requested:e} s, earliest valid time is {earliest:e} s")]
    FieldHistory { requested: f64, earliest: f64 },

    #[error("record too short: {len} samples, need at least {required}")]
    RecordTooShort { len: usize, required: usize },

    #[error("innovation covariance is singular at step {step}")]
    SingularInnovation { step: usize },

    #[error("initial covariance is not symmetric positive semidefinite: {0}")]
    NotPositiveSemidefinite(String),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
