use std::path::PathBuf;

use causalnet_convnet::NetError;
use causalnet_core::CoreError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}:{line}: {message}", path.display())]
    Load { path: PathBuf, line: usize, message: String },

    #[error("no trials: {0}")]
    Empty(String),

    #[error("unstable generator: spectral radius {radius:.4} at sample {t} of class {class}")]
    Unstable { class: String, t: usize, radius: f64 },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<PipelineError>,
    },

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Net(#[from] NetError),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn load(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        PipelineError::Load {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit status: 2 for bad data or configuration, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Stage { source, .. } => source.exit_code(),
            PipelineError::Core(e) if e.is_numeric() => 3,
            PipelineError::Net(NetError::Core(e)) if e.is_numeric() => 3,
            PipelineError::Net(NetError::NoUsableMember(_)) => 3,
            _ => 2,
        }
    }
}

/// Tags errors from one pipeline stage.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T, E: Into<PipelineError>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| PipelineError::Stage {
            stage,
            source: Box::new(e.into()),
        })
    }
}
