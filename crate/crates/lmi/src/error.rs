use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmiError {
    #[error("constraint `{constraint}` references unknown index {index} not declared by this problem")]
    UnknownVariable { constraint: String, index: usize },
    #[error("constraint `{0}` has non-finite coefficients")]
    NonFinite(String),
    #[error("constraint `{0}` has zero size")]
    EmptyConstraint(String),
    #[error("invalid solver settings: {0}")]
    Settings(String),
}
