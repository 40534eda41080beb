use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("constraint `{constraint}` references undeclared variable index {index}")]
    UnknownVariable { constraint: String, index: usize },
    #[error("variable `{name}`: {reason}")]
    InvalidBounds { name: String, reason: String },
    #[error("model too large for the embedded engine: {vars} variables, {rows} constraints (cap {cap})")]
    ModelTooLarge { vars: usize, rows: usize, cap: usize },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

pub type MilpResult<T> = Result<T, MilpError>;
