use thiserror::Error;

use crate::model::Mode;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("missing parameter `{0}`")]
    MissingParameter(String),

    #[error("failed to parse parameter file: {0}")]
    ParameterFile(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid phase plan: {0}")]
    InvalidPlan(String),

    #[error("non-finite state at t = {t:.6} s in mode {mode}")]
    NonFiniteState { t: f64, mode: Mode },

    #[error("singular constraint system in mode {0}")]
    SingularConstraint(Mode),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("no response crossing found for command edge at t = {0:.6} s")]
    NoCrossing(f64),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
