use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

/// Failures, each mapped to a stable process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<mireg_core::Error> for CliError {
    fn from(e: mireg_core::Error) -> Self {
        use mireg_core::Error as E;
        match e {
            E::Config(_) | E::Parse(_) | E::InvalidSpec(_) | E::InvalidMdp(_) | E::Shape { .. } | E::InvalidDistribution { .. } => {
                CliError::Config(e.to_string())
            }
            E::Io(msg) => CliError::Io(std::io::Error::other(msg)),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<mireg_agent::AgentError> for CliError {
    fn from(e: mireg_agent::AgentError) -> Self {
        use mireg_agent::AgentError as E;
        match e {
            E::Config(_) => CliError::Config(e.to_string()),
            E::Io(io) => CliError::Io(io),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e.to_string()))
    }
}
