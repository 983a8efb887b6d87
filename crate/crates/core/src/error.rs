use thiserror::Error;

pub type Result<T> = std::result::Result<T, CostaError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostaError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An operation needs a smoothness constant that the problem left unknown.
    #[error("metadata required: {0} is unknown")]
    MetadataRequired(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("surrogate undefined: {0}")]
    SurrogateUndefined(String),

    #[error("subproblem infeasible: {0}")]
    InfeasibleSubproblem(String),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CostaError {
    fn from(e: std::io::Error) -> Self {
        CostaError::Io(e.to_string())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(CostaError::DimensionMismatch { expected, got })
    }
}
