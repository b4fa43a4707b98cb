//! Problem files, command pipelines and artifact output for the `approach`
//! binary.
//!
//! Exit codes: 0 success, 1 check failed, 2 input error, 3 no fixed point
//! within `max_iter`, 4 commutation hypothesis violated.

pub mod commands;
pub mod output;
pub mod problem;

use approach_core::bridge::BridgeError;
use approach_core::flows::FlowError;
use approach_core::isaacs::IsaacsError;
use approach_core::simulate::SimulateError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    NonConvergence(String),
    #[error("{0}")]
    Hypothesis(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::Io(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Hypothesis(_) => 4,
        }
    }
}

impl From<BridgeError> for CliError {
    fn from(e: BridgeError) -> Self {
        match e {
            BridgeError::NonConvergence { max_iter, .. } => {
                CliError::NonConvergence(format!("no fixed point after {max_iter} iterations"))
            }
            BridgeError::Io(e) => CliError::Io(e),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<IsaacsError> for CliError {
    fn from(e: IsaacsError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SimulateError> for CliError {
    fn from(e: SimulateError) -> Self {
        CliError::Input(e.to_string())
    }
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    CheckFailed,
}

impl Status {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::CheckFailed
        }
    }

    pub fn exit_code(self) -> u8 {
        match self {
            Status::Pass => 0,
            Status::CheckFailed => 1,
        }
    }
}
