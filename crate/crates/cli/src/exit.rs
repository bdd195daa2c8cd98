use std::fmt;

use keyetm::Error;

/// Process exit status by failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Code {
    Other = 1,
    Input = 2,
    NonFinite = 3,
    Stale = 4,
    Mismatch = 5,
}

/// Error raised by the CLI itself, tagged with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: Code,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub fn input_error(message: String) -> anyhow::Error {
    CliError {
        code: Code::Input,
        message,
    }
    .into()
}

pub fn stale_error(message: String) -> anyhow::Error {
    CliError {
        code: Code::Stale,
        message,
    }
    .into()
}

fn library_code(e: &Error) -> Code {
    match e {
        Error::NonFiniteLoss { .. } | Error::NonFiniteValue(_) => Code::NonFinite,
        Error::VocabMismatch(_) | Error::Checkpoint(_) | Error::ShapeMismatch(_) => Code::Mismatch,
        Error::CannotFindIntruder(_) | Error::NotScalarLoss(_) => Code::Other,
        _ => Code::Input,
    }
}

/// First tagged cause in the chain decides; untagged I/O and parse
/// failures count as input errors.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(c) = cause.downcast_ref::<CliError>() {
            return c.code as i32;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return library_code(e) as i32;
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() || cause.is::<csv::Error>() {
            return Code::Input as i32;
        }
    }
    Code::Other as i32
}
