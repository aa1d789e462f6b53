use thiserror::Error;

pub type Result<T> = std::result::Result<T, AgentError>;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Nn(#[from] mireg_nn::NnError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite {loss} at step {step}")]
    NonFinite { step: usize, loss: &'static str },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
