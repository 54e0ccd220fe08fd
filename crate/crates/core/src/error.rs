use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid B-spline order {0}: order must be at least 1")]
    InvalidOrder(usize),

    #[error("point {value} outside the allowed range [{low}, {high}]")]
    OutOfRange { value: f64, low: f64, high: f64 },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("insufficient data: need more than {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("every candidate term was eliminated by the norm screen")]
    EmptyModel,

    #[error("forgetting factor {0} must lie strictly between 0 and 1")]
    InvalidForgetting(f64),

    #[error("degenerate variance at sample {t}")]
    DegenerateVariance { t: usize },

    #[error("degenerate spectrum at sample {t}, {freq} Hz")]
    DegenerateSpectrum { t: usize, freq: f64 },

    #[error("ill-conditioned transfer matrix at sample {t}, {freq} Hz")]
    Conditioning { t: usize, freq: f64 },

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("level {level} is not achievable with {surrogates} surrogates")]
    LevelUnachievable { level: f64, surrogates: usize },

    #[error("incomplete input: {0}")]
    Incomplete(String),

    #[error("invalid crop: {0}")]
    InvalidCrop(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CoreError {
    /// Numerical failures as opposed to bad input or configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            CoreError::EmptyModel
                | CoreError::DegenerateVariance { .. }
                | CoreError::DegenerateSpectrum { .. }
                | CoreError::Conditioning { .. }
        )
    }
}
