//! Exit-code classification: 2 for usage and validation problems, 1 for
//! failures while doing the work.

use std::fmt;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

impl CliError {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Self {
            code: EXIT_USAGE,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn runtime(msg: impl fmt::Display) -> Self {
        Self {
            code: EXIT_RUNTIME,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn context(self, ctx: impl fmt::Display + Send + Sync + 'static) -> Self {
        Self {
            code: self.code,
            error: self.error.context(ctx),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

/// Errors the caller can fix by changing arguments.
fn is_usage(e: &gridsr::Error) -> bool {
    use gridsr::Error::*;
    matches!(
        e,
        InvalidConfig(_)
            | UnsupportedFactor(_)
            | NotDivisible { .. }
            | TooSmall { .. }
            | ShapeMismatch(_)
            | EmptyDataset
    )
}

impl From<gridsr::Error> for CliError {
    fn from(e: gridsr::Error) -> Self {
        Self {
            code: if is_usage(&e) { EXIT_USAGE } else { EXIT_RUNTIME },
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(error: anyhow::Error) -> Self {
        Self {
            code: EXIT_RUNTIME,
            error,
        }
    }
}
