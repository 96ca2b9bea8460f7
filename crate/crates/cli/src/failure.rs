use std::fmt;
use std::process::ExitCode;

use objdyn::Error;

/// Process exit status classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Usage = 1,
    Data = 2,
    Numerical = 3,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            kind: Kind::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure {
            kind: Kind::Data,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind as u8)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = match e {
            Error::Config(_) | Error::LayerSpec { .. } => Kind::Usage,
            Error::NonFiniteLoss { .. }
            | Error::NonFiniteGradient(_)
            | Error::NonFiniteState(_)
            | Error::Domain { .. } => Kind::Numerical,
            _ => Kind::Data,
        };
        Failure {
            kind,
            message: e.to_string(),
        }
    }
}
