use std::fmt;

use joltlab::Error;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_NUMERICAL,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Malformed input and bad settings exit 2, well-formed data that breaks a
/// contract exits 3, and failures inside the numerics exit 4.
fn exit_code(e: &Error) -> u8 {
    use Error::*;
    match e {
        Parse { .. } | Schema { .. } | Io { .. } | InvalidSpec(_) | InvalidOrder(_) | InvalidConfig(_)
        | TooFewPermutations(_) | BudgetExceeded { .. } | OrderExceedsPoly { .. } | EmptyCell => EXIT_USAGE,
        NonMonotonicTime { .. }
        | NonFiniteValue { .. }
        | NonPositiveValue { .. }
        | LengthMismatch { .. }
        | EmptySeries
        | GridMismatch
        | ScheduleViolation { .. }
        | NonUniformGrid { .. }
        | WindowTooLarge { .. }
        | SpanTooSmall { .. }
        | InsufficientData { .. }
        | SeriesTooShort { .. }
        | TooFewPoints { .. }
        | OutOfRange { .. } => EXIT_DATA,
        IllConditioned { .. } | NonPositiveCapability { .. } | Json(_) => EXIT_NUMERICAL,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}
