use std::fmt;

use dpt_core::Error;

/// Process exit codes.
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_PHASE: i32 = 4;
pub const EXIT_DATA: i32 = 5;
pub const EXIT_CHECK_FAILED: i32 = 1;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: EXIT_IO, message: message.into() }
    }

    pub fn check_failed(message: impl Into<String>) -> Self {
        Self { code: EXIT_CHECK_FAILED, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::WrongPhase { .. } => EXIT_PHASE,
        Error::Io(_) | Error::MissingFile(_) | Error::BadCheckpoint(_) => EXIT_IO,
        Error::TaskMismatch { .. }
        | Error::ClassCountMismatch { .. }
        | Error::InvalidDataset(_)
        | Error::EmptyDataset
        | Error::BadManifestRow { .. }
        | Error::UnsupportedFormat(_)
        | Error::LabelOutOfRange { .. }
        | Error::ShapeMismatch { .. } => EXIT_DATA,
        _ => EXIT_USAGE,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self { code: exit_code(&e), message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
