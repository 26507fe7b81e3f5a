use std::fmt;
use std::path::Path;
use std::process::ExitCode;

pub const EXIT_DIVERGENCE: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;

#[derive(Debug)]
pub enum CliError {
    Core(spad_core::Error),
    Config(String),
    Io(String, std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Core(spad_core::Error::Divergence { .. }) => ExitCode::from(EXIT_DIVERGENCE),
            _ => ExitCode::from(EXIT_CONFIG),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io(path.display().to_string(), source)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Io(path, e) => write!(f, "{path}: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<spad_core::Error> for CliError {
    fn from(e: spad_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}
