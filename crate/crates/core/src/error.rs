use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid {what}: {reason}")]
    InvalidDistribution { what: &'static str, reason: String },
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),
    #[error("invalid grid-world spec: {0}")]
    InvalidSpec(String),
    #[error("KL divergence is infinite: p({index}) > 0 but q({index}) = 0")]
    InfiniteDivergence { index: usize },
    #[error("policy puts mass on action {action} in state {state} where the prior is zero")]
    AbsoluteContinuity { state: usize, action: usize },
    #[error("prior leaves no admissible action in state {state}")]
    DegeneratePrior { state: usize },
    #[error("initial policy has zero probability for action {action} in state {state}; gap bound is infinite")]
    InfiniteBound { state: usize, action: usize },
    #[error("non-finite {what} at iteration {iteration}")]
    NumericalFailure { what: &'static str, iteration: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn ensure_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Shape {
            what,
            expected,
            found,
        })
    }
}
