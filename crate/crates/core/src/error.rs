use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GpError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid kernel parameters for output dimension {dim}")]
    InvalidParams { dim: usize },
    #[error("kernel matrix for output dimension {dim} is singular after jitter escalation")]
    Singular { dim: usize },
    #[error("hyperparameter fit failed for output dimension {dim}")]
    FitFailure { dim: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("non-positive variance in entropy computation")]
    NonPositiveVariance,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("invalid plan spec: {0}")]
    InvalidSpec(&'static str),
    #[error("dynamics produced a non-finite return for the rollout of action sequence")]
    NonFinite { actions: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite state or action")]
    NonFinite,
    #[error("unknown environment `{0}`")]
    Unknown(alloc::string::String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AcqError {
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("empty input: {0}")]
    Empty(&'static str),
}
