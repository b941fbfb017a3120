use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DdstError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("ill-conditioned pilot: |C({bin})| = {magnitude:e}")]
    IllConditionedPilot { bin: usize, magnitude: f64 },

    #[error("undefined input: {0}")]
    UndefinedInput(String),

    #[error("calibration failed for target EVM {target_pct}%: {reason}")]
    Calibration { target_pct: f64, reason: String },

    /// A learned receiver stage failed; the message carries the model's diagnostic.
    #[error("model stage failed: {0}")]
    Model(String),
}

pub type Result<T> = std::result::Result<T, DdstError>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(DdstError::Dimension { expected, found })
    }
}
