//! Library half of the command-line tool: architecture files, plan parsing,
//! the verification battery, and report rendering.

pub mod archfile;
pub mod commands;
pub mod plan;
pub mod report;
pub mod verify;

/// A command failure carrying its process exit code.
///
/// Exit codes are a stable contract: 0 success, 2 parse/validation errors,
/// 3 rejected directives, 4 weight-container mismatches, 5 verification
/// failures.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn rejected(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }

    pub fn weights(message: impl Into<String>) -> Self {
        CliError {
            code: 4,
            message: message.into(),
        }
    }

    pub fn verification(message: impl Into<String>) -> Self {
        CliError {
            code: 5,
            message: message.into(),
        }
    }

    /// Maps a core error in a plan-application context.
    pub fn from_plan_error(e: convfactor::Error) -> Self {
        match &e {
            convfactor::Error::RejectedDirective(_) => CliError::rejected(e.to_string()),
            convfactor::Error::Corrupt(_) | convfactor::Error::ShapeMismatch(_) => {
                CliError::weights(e.to_string())
            }
            _ => CliError::validation(e.to_string()),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}
