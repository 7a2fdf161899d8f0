use std::fmt;
use std::process::ExitCode;

/// Failure of a subcommand, split by exit code: usage and configuration
/// problems exit 2, runtime failures exit 3.
#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn usage(msg: impl fmt::Display) -> Self {
        CliError::Usage(anyhow::anyhow!("{msg}"))
    }

    pub fn runtime(msg: impl fmt::Display) -> Self {
        CliError::Runtime(anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(3),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, e) = match self {
            CliError::Usage(e) => ("error", e),
            CliError::Runtime(e) => ("runtime failure", e),
        };
        write!(f, "{kind}: {e:#}")
    }
}

impl std::error::Error for CliError {}

/// Tags a fallible result with the exit class it belongs to.
pub trait Classify<T> {
    fn or_usage(self, context: impl fmt::Display) -> Result<T, CliError>;
    fn or_runtime(self, context: impl fmt::Display) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_usage(self, context: impl fmt::Display) -> Result<T, CliError> {
        self.map_err(|e| CliError::Usage(e.into().context(context.to_string())))
    }

    fn or_runtime(self, context: impl fmt::Display) -> Result<T, CliError> {
        self.map_err(|e| CliError::Runtime(e.into().context(context.to_string())))
    }
}
