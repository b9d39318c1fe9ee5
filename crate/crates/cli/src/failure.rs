use std::fmt;
use std::process::ExitCode;

use prunedoc::Error;

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 4;
pub const EXIT_DEGENERATE: u8 = 5;

/// A command failure carrying its process exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn io(context: impl fmt::Display, err: impl fmt::Display) -> Self {
        Self { code: EXIT_IO, message: format!("{context}: {err}") }
    }

    pub fn report(&self) -> ExitCode {
        eprintln!("error: {}", self.message);
        ExitCode::from(self.code)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_)
            | Error::Shape { .. }
            | Error::Bounds { .. }
            | Error::State(_)
            | Error::MalformedInput(_) => EXIT_USAGE,
            Error::DegenerateData(_) => EXIT_DEGENERATE,
            Error::Parse(_) | Error::Io(_) | Error::Image(_) => EXIT_IO,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self { code: EXIT_IO, message: e.to_string() }
    }
}

pub type CmdResult = Result<u8, Failure>;
