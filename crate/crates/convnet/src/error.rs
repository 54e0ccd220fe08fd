use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("architecture infeasible: {0}")]
    Infeasible(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training data has a single class")]
    DegenerateLabels,
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("first boosting round has weighted error {0} >= 0.5")]
    NoUsableMember(f64),
    #[error("bad checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Core(#[from] causalnet_core::CoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NetError>;
