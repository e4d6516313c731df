use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown character {ch:?} at position {position}")]
    UnknownCharacter { position: usize, ch: char },
    #[error("blank token at position {0} cannot be rendered as text")]
    BlankInText(usize),
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: usize, size: usize },

    #[error("posterior grid has no frames")]
    EmptyGrid,
    #[error("invalid posterior grid: {0}")]
    InvalidGrid(String),
    #[error("target contains the blank symbol at position {0}")]
    BlankInTarget(usize),
    #[error("target of length {target_len} needs at least {required} frames, grid has {frames}")]
    Unalignable { target_len: usize, required: usize, frames: usize },
    #[error("cannot extend a prefix by the blank symbol")]
    BlankExtension,

    #[error("scorer layout does not match the utterance context")]
    ContextMismatch,
    #[error("scorer cannot emit the blank symbol")]
    BlankToken,
    #[error("scorer is not deterministic")]
    NondeterministicScorer,
    #[error("invalid scorer: {0}")]
    InvalidScorer(String),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("decoder produced no complete hypothesis")]
    EmptyResult,
    #[error("search space of {0} sequences exceeds the exhaustive-search guard")]
    SearchSpaceTooLarge(u128),

    #[error("frame count mismatch: audio {audio}, visual {visual}")]
    FrameCountMismatch { audio: usize, visual: usize },
    #[error("rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(f64, f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("infeasible rate alignment: {0}")]
    InfeasiblePlan(String),
    #[error("odd frame count {0} cannot be halved")]
    OddFrameCount(usize),

    #[error("signal is constant and cannot be normalized")]
    ConstantSignal,
    #[error("noise signal has zero power")]
    SilentNoise,
    #[error("need at least {required} noise sources, got {available}")]
    InsufficientSources { required: usize, available: usize },
    #[error("noise source {index} has {len} samples, need at least {required}")]
    SourceTooShort { index: usize, len: usize, required: usize },
    #[error("unsupported audio: {0}")]
    UnsupportedAudio(String),

    #[error("landmark track has no valid frame")]
    AllInvalid,
    #[error("source landmarks are degenerate (all points coincide)")]
    DegenerateSource,
    #[error("crop box out of bounds: {0}")]
    BoundsError(String),
    #[error("invalid landmarks: {0}")]
    InvalidLandmarks(String),

    #[error("reference has no words")]
    EmptyReference,
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnknownCharacter { .. } => "UnknownCharacter",
            Error::BlankInText(_) => "BlankInText",
            Error::InvalidVocabulary(_) => "InvalidVocabulary",
            Error::TokenOutOfRange { .. } => "TokenOutOfRange",
            Error::EmptyGrid => "EmptyGrid",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::BlankInTarget(_) => "BlankInTarget",
            Error::Unalignable { .. } => "Unalignable",
            Error::BlankExtension => "BlankExtension",
            Error::ContextMismatch => "ContextMismatch",
            Error::BlankToken => "BlankToken",
            Error::NondeterministicScorer => "NondeterministicScorer",
            Error::InvalidScorer(_) => "InvalidScorer",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::InvalidTarget(_) => "InvalidTarget",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::EmptyResult => "EmptyResult",
            Error::SearchSpaceTooLarge(_) => "SearchSpaceTooLarge",
            Error::FrameCountMismatch { .. } => "FrameCountMismatch",
            Error::RateMismatch(..) => "RateMismatch",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::InfeasiblePlan(_) => "InfeasiblePlan",
            Error::OddFrameCount(_) => "OddFrameCount",
            Error::ConstantSignal => "ConstantSignal",
            Error::SilentNoise => "SilentNoise",
            Error::InsufficientSources { .. } => "InsufficientSources",
            Error::SourceTooShort { .. } => "SourceTooShort",
            Error::UnsupportedAudio(_) => "UnsupportedAudio",
            Error::AllInvalid => "AllInvalid",
            Error::DegenerateSource => "DegenerateSource",
            Error::BoundsError(_) => "BoundsError",
            Error::InvalidLandmarks(_) => "InvalidLandmarks",
            Error::EmptyReference => "EmptyReference",
            Error::InvalidManifest(_) => "InvalidManifest",
            Error::Format(_) => "Format",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Wav(_) => "Wav",
            Error::Csv(_) => "Csv",
        }
    }
}
