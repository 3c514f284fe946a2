use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("transform length must be at least 1")]
    InvalidLength,
    #[error("temporal bin {bin} out of range for {frames} frames")]
    InvalidBin { bin: usize, frames: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid phantom configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid corruption spec: {0}")]
    InvalidSpec(String),
    #[error("random frame offsets need at least 2 frames, got {0}")]
    InsufficientFrames(usize),

    #[error("sequence has constant intensity {0}; cannot normalize")]
    DegenerateIntensity(f64),
    #[error("no periodic motion detected (peak harmonic magnitude {0:.3e})")]
    NoMotionDetected(f64),
    #[error("no circular structure found in the harmonic map")]
    NoCircularStructure,
    #[error("invalid region of interest: {0}")]
    InvalidRoi(String),

    #[error("training set has no {0} samples")]
    EmptyClass(&'static str),
    #[error("invalid augmentation policy: {0}")]
    InvalidPolicy(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid network configuration: {0}")]
    InvalidNetwork(String),
    #[error("invalid training configuration: {0}")]
    InvalidTrainConfig(String),
    #[error("non-finite gradient encountered")]
    NonFiniteGradient,

    #[error("frame of {h}x{w} is smaller than the 3x3 kernel")]
    FrameTooSmall { h: usize, w: usize },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("invalid k={k} for {n} training samples")]
    InvalidNeighbours { k: usize, n: usize },

    #[error("number of folds must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("confusion matrix is empty")]
    EmptyEvaluation,
    #[error("sample {0} is not a real acquisition; augmented data must never be evaluated")]
    AugmentedInTestFold(usize),

    #[error("bad file format: {0}")]
    Format(String),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
