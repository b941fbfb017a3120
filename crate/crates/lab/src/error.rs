use ddst_core::DdstError;
use ddst_neural::NeuralError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing dependency: {0}")]
    MissingDependency(String),

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error(transparent)]
    Link(DdstError),

    #[error(transparent)]
    Neural(NeuralError),

    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("output error: {0}")]
    Output(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

impl LabError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io { path: path.as_ref().display().to_string(), source }
    }

    /// Process exit status for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Link(DdstError::Config(_) | DdstError::Calibration { .. }) => 2,
            Self::Neural(NeuralError::Config(_) | NeuralError::Architecture(_)) => 2,
            Self::MissingDependency(_) | Self::Neural(NeuralError::MissingDependency(_)) => 3,
            Self::Divergence(_) | Self::Neural(NeuralError::Divergence { .. }) => 4,
            _ => 1,
        }
    }
}

impl From<DdstError> for LabError {
    fn from(e: DdstError) -> Self {
        Self::Link(e)
    }
}

impl From<NeuralError> for LabError {
    fn from(e: NeuralError) -> Self {
        match e {
            NeuralError::Link(inner) => Self::Link(inner),
            other => Self::Neural(other),
        }
    }
}
