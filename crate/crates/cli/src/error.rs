use std::fmt;

use qme::QmeError;

/// Failure of a CLI command, mapped onto the process exit status.
#[derive(Debug)]
pub enum CliError {
    /// The configuration is malformed or inconsistent; `key` locates the problem.
    Config { key: String, message: String },
    /// A solver reported a numerical failure.
    Numerical(QmeError),
    /// `--check` was requested and at least one predicate failed.
    Check(Vec<String>),
    /// Reading the configuration or writing outputs failed.
    Io(String),
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Check(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { key, message } => write!(f, "invalid configuration at `{key}`: {message}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Check(failures) => {
                write!(f, "{} check(s) failed", failures.len())?;
                for line in failures {
                    write!(f, "\n  {line}")?;
                }
                Ok(())
            }
            CliError::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<QmeError> for CliError {
    fn from(e: QmeError) -> Self {
        CliError::Numerical(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
