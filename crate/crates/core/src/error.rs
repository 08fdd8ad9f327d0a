use thiserror::Error;

/// Errors raised by the domain types and optimizers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),
    #[error("invalid scores: {0}")]
    InvalidScores(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("vector length {got} does not match expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;
