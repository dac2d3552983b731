//! CLI errors with machine-parsable codes and stable exit statuses.

use std::fmt;
use std::path::PathBuf;

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or flag value; message names the field.
    Config(String),
    /// Malformed data file; message carries the byte offset where known.
    Format { path: PathBuf, message: String },
    /// Filesystem problems.
    Io { path: PathBuf, source: std::io::Error },
    /// Training produced a non-finite loss.
    Diverged { epoch: usize, iteration: usize },
    /// Checkpoint/version/ordering problems.
    State(String),
}

impl CliError {
    /// Short code printed as `error[CODE]: ...`; scripts can match on it.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "E_CONFIG",
            CliError::Format { .. } => "E_FORMAT",
            CliError::Io { .. } => "E_IO",
            CliError::Diverged { .. } => "E_DIVERGED",
            CliError::State(_) => "E_STATE",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Format { .. } | CliError::Io { .. } => 3,
            CliError::Diverged { .. } => 4,
            CliError::State(_) => 5,
        }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        CliError::Config(msg.to_string())
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl fmt::Display) -> Self {
        CliError::Format {
            path: path.into(),
            message: msg.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn state(msg: impl fmt::Display) -> Self {
        CliError::State(msg.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Format { path, message } => {
                write!(f, "{}: {message}", path.display())
            }
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Diverged { epoch, iteration } => write!(
                f,
                "training diverged (non-finite loss) at epoch {epoch}, iteration {iteration}"
            ),
            CliError::State(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<optg_core::Error> for CliError {
    fn from(e: optg_core::Error) -> Self {
        match e {
            optg_core::Error::Diverged { epoch, iteration } => {
                CliError::Diverged { epoch, iteration }
            }
            optg_core::Error::Config(msg) | optg_core::Error::Input(msg) => CliError::Config(msg),
            optg_core::Error::State(msg) => CliError::State(msg),
            optg_core::Error::Dimension(msg) => CliError::Config(msg),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
