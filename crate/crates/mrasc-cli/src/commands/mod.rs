pub mod eval;
pub mod extract;
pub mod report;
pub mod synth;
pub mod train;

use crate::CliError;

pub(crate) fn runtime(err: impl std::fmt::Display) -> CliError {
    CliError::Runtime(err.to_string())
}

pub(crate) fn validation(err: impl std::fmt::Display) -> CliError {
    CliError::Validation(err.to_string())
}
