use std::fmt;

use bsa_core::Error;

pub const CONFIG: u8 = 2;
pub const NUMERICAL: u8 = 3;
pub const SOLVER: u8 = 4;
pub const PARTIAL: u8 = 5;

/// A failed command: process exit code plus diagnostic.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Failure {
        Failure {
            code: CONFIG,
            message: message.into(),
        }
    }

    pub fn solver(message: impl Into<String>) -> Failure {
        Failure {
            code: SOLVER,
            message: message.into(),
        }
    }

    pub fn partial(message: impl Into<String>) -> Failure {
        Failure {
            code: PARTIAL,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let code = match &e {
            Error::InvalidParameter { .. }
            | Error::MissingParameter(_)
            | Error::ParameterFile(_)
            | Error::InvalidSchedule(_)
            | Error::InvalidPlan(_)
            | Error::InvalidInput(_)
            | Error::Io(_)
            | Error::Csv(_) => CONFIG,
            Error::NonFiniteState { .. } | Error::SingularConstraint(_) | Error::Degenerate(_) | Error::NoCrossing(_) => {
                NUMERICAL
            }
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure::config(format!("i/o error: {e}"))
    }
}
