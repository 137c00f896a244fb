use mckeanflow_core::Error;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) => 2,
            CliError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "validation",
            CliError::Core(e) if e.is_numerical() => "numerical",
            CliError::Core(_) => "validation",
            CliError::Io(_) => "io",
        }
    }

    /// Single line, `key=value` pairs with the message JSON-quoted.
    pub fn reason_line(&self) -> String {
        let msg = serde_json::to_string(&self.to_string()).unwrap_or_default();
        format!("error kind={} code={} message={msg}", self.kind(), self.exit_code())
    }
}
