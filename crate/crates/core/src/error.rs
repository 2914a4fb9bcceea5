use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("row {0} has zero norm")]
    ZeroNormRow(usize),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no supervised points for the segmentation loss")]
    EmptySupervision,

    #[error("no valid masks for the mask regularization loss")]
    NoValidMasks,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("timestep {t} out of range [1, {max}]")]
    StepOutOfRange { t: usize, max: usize },

    #[error("unknown condition mode `{0}`")]
    Mode(String),

    #[error("non-finite loss at epoch {epoch}, scene {scene}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        scene: usize,
        detail: String,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_mismatch(msg: impl Into<String>) -> Error {
    Error::DimMismatch(msg.into())
}
