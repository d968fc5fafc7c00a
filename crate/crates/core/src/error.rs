use thiserror::Error;

use crate::repr::Op;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("malformed state: {0}")]
    MalformedState(String),
    #[error("malformed command: {0}")]
    MalformedCommand(String),
    #[error("malformed block: {0}")]
    MalformedBlock(String),
    #[error("malformed expression: {0}")]
    MalformedExpression(String),
    #[error("malformed halt block: {0}")]
    MalformedHalt(String),
    #[error("{op} takes {expected} operand(s), got {got}")]
    ArityMismatch { op: Op, expected: usize, got: usize },
    #[error("division by zero")]
    ZeroDivisor,
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("subtraction would produce a negative result")]
    NegativeResult,
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("call protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("step limit of {0} predictor calls exceeded")]
    StepLimitExceeded(usize),
    #[error("call depth limit of {0} exceeded")]
    DepthExceeded(usize),
    #[error("malformed prediction: {0}")]
    MalformedPrediction(String),
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no adapter mapped for {0}")]
    AdapterUnmapped(String),
    #[error("io error: {0}")]
    Io(String),
}

/// Coarse grouping used for exit codes and report summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorClass {
    Parse,
    Domain,
    Machine,
    Budget,
    Transport,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::MalformedState(_)
            | Error::MalformedCommand(_)
            | Error::MalformedBlock(_)
            | Error::MalformedExpression(_)
            | Error::MalformedHalt(_)
            | Error::MalformedPrediction(_) => ErrorClass::Parse,
            Error::ArityMismatch { .. }
            | Error::ZeroDivisor
            | Error::DomainError(_)
            | Error::NegativeResult => ErrorClass::Domain,
            Error::InvalidState(_) | Error::ProtocolViolation(_) => ErrorClass::Machine,
            Error::StepLimitExceeded(_) | Error::DepthExceeded(_) => ErrorClass::Budget,
            Error::Timeout(_) | Error::Transport(_) | Error::AdapterUnmapped(_) => {
                ErrorClass::Transport
            }
            Error::Io(_) => ErrorClass::Io,
        }
    }

    /// Short stable name of the variant, e.g. `"StepLimitExceeded"`.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedState(_) => "MalformedState",
            Error::MalformedCommand(_) => "MalformedCommand",
            Error::MalformedBlock(_) => "MalformedBlock",
            Error::MalformedExpression(_) => "MalformedExpression",
            Error::MalformedHalt(_) => "MalformedHalt",
            Error::ArityMismatch { .. } => "ArityMismatch",
            Error::ZeroDivisor => "ZeroDivisor",
            Error::DomainError(_) => "DomainError",
            Error::NegativeResult => "NegativeResult",
            Error::InvalidState(_) => "InvalidState",
            Error::ProtocolViolation(_) => "ProtocolViolation",
            Error::StepLimitExceeded(_) => "StepLimitExceeded",
            Error::DepthExceeded(_) => "DepthExceeded",
            Error::MalformedPrediction(_) => "MalformedPrediction",
            Error::Timeout(_) => "Timeout",
            Error::Transport(_) => "TransportError",
            Error::AdapterUnmapped(_) => "AdapterUnmapped",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
