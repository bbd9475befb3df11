use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box ({x}, {y}, {w}, {h}): width and height must be positive and finite")]
    InvalidBox { x: f64, y: f64, w: f64, h: f64 },
    #[error("invalid transformation ({dx}, {dy}, {ds}): scale must be positive and finite")]
    InvalidTransformation { dx: f64, dy: f64, ds: f64 },
    #[error("box does not overlap the frame")]
    BoxOutsideFrame,
    #[error("rejection sampling failed {attempts} consecutive times: {what}")]
    DegenerateFrame { what: &'static str, attempts: usize },
    #[error("sample set needs at least one positive and one negative")]
    InsufficientDiversity,
    #[error("feature dimension {found} does not match {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("model has not been trained")]
    UntrainedModel,
    #[error("no ground truth file in {0}")]
    MissingGroundTruth(PathBuf),
    #[error("{frames} frames but {boxes} ground-truth boxes")]
    FrameCountMismatch { frames: usize, boxes: usize },
    #[error("{path}:{line}: cannot parse {content:?}")]
    UnparsableLine {
        path: PathBuf,
        line: usize,
        content: String,
    },
    #[error("configuration out of bounds: {0}")]
    ConfigOutOfBounds(String),
    #[error("unknown attribute tag {0:?}")]
    UnknownAttribute(String),
    #[error("estimate has {estimated} boxes, ground truth has {truth}")]
    LengthMismatch { estimated: usize, truth: usize },
    #[error("AUC is only defined for success curves")]
    WrongCurveKind,
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("config parse error: {0}")]
    Config(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error stems from bad input or configuration rather than
    /// a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidBox { .. }
                | Error::InvalidTransformation { .. }
                | Error::MissingGroundTruth(_)
                | Error::FrameCountMismatch { .. }
                | Error::UnparsableLine { .. }
                | Error::ConfigOutOfBounds(_)
                | Error::UnknownAttribute(_)
                | Error::LengthMismatch { .. }
                | Error::WrongCurveKind
                | Error::Config(_)
        )
    }
}
