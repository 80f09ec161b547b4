use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector has (near) zero L2 norm")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("invalid embedding set: {0}")]
    InvalidSet(String),
    #[error("expected {expected} modality for `{id}`")]
    Modality { id: String, expected: &'static str },
    #[error("empty prompt set")]
    EmptyPromptSet,
    #[error("pool has {pool} embeddings, fewer than the {requested} requested")]
    PoolTooSmall { requested: usize, pool: usize },
    #[error("no samples labeled `{0}`")]
    NoSamplesForClass(String),
    #[error("empty input")]
    EmptyInput,
    #[error("empty profile")]
    EmptyProfile,
    #[error("vocabulary mismatch between profiles")]
    VocabularyMismatch,
    #[error("tau {0} outside [0, 1]")]
    TauOutOfRange(f64),
    #[error("segment [{start_s}, {end_s}) s is empty or outside the clip")]
    EmptySegment { start_s: f64, end_s: f64 },
    #[error("foreground is silent")]
    SilentForeground,
    #[error("background is silent over the foreground window")]
    SilentBackground,
    #[error("sample rate mismatch: {fg} Hz vs {bg} Hz")]
    SampleRateMismatch { fg: u32, bg: u32 },
    #[error("foreground does not fit in the background at the requested onset")]
    ForegroundTooLong,
    #[error("invalid audio clip: {0}")]
    InvalidClip(String),
    #[error("empty set: {0}")]
    EmptySet(String),
    #[error("need {needed} distinct classes, only {available} available")]
    InsufficientClasses { needed: usize, available: usize },
    #[error("annotation `{class}` [{start_s}, {end_s}] outside recording of {duration_s} s")]
    AnnotationOutOfBounds {
        class: String,
        start_s: f64,
        end_s: f64,
        duration_s: f64,
    },
    #[error("sample ids of predictions and truths differ")]
    IdMismatch,
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("empty tau grid")]
    EmptyGrid,
    #[error("invalid tau grid: {0}")]
    InvalidGrid(String),
    #[error("missing prototypes for provenance {0}")]
    MissingProvenance(&'static str),
    #[error("dimension {dim} too small for {classes} orthogonal class directions")]
    DimTooSmall { dim: usize, classes: usize },
    #[error("mixture has no components")]
    EmptyComponents,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
}

impl Error {
    /// Stable machine-readable kind, used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ZeroVector => "ZeroVector",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::Format { .. } => "FormatError",
            Error::InvalidSet(_) => "InvalidSet",
            Error::Modality { .. } => "ModalityError",
            Error::EmptyPromptSet => "EmptyPromptSet",
            Error::PoolTooSmall { .. } => "PoolTooSmall",
            Error::NoSamplesForClass(_) => "NoSamplesForClass",
            Error::EmptyInput => "EmptyInput",
            Error::EmptyProfile => "EmptyProfile",
            Error::VocabularyMismatch => "VocabularyMismatch",
            Error::TauOutOfRange(_) => "TauOutOfRange",
            Error::EmptySegment { .. } => "EmptySegment",
            Error::SilentForeground => "SilentForeground",
            Error::SilentBackground => "SilentBackground",
            Error::SampleRateMismatch { .. } => "SampleRateMismatch",
            Error::ForegroundTooLong => "ForegroundTooLong",
            Error::InvalidClip(_) => "InvalidClip",
            Error::EmptySet(_) => "EmptySet",
            Error::InsufficientClasses { .. } => "InsufficientClasses",
            Error::AnnotationOutOfBounds { .. } => "AnnotationOutOfBounds",
            Error::IdMismatch => "IdMismatch",
            Error::UnknownClass(_) => "UnknownClass",
            Error::EmptyGrid => "EmptyGrid",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::MissingProvenance(_) => "MissingProvenance",
            Error::DimTooSmall { .. } => "DimTooSmall",
            Error::EmptyComponents => "EmptyComponents",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Config(_) => "ConfigError",
            Error::Io { .. } => "IoError",
            Error::Json { .. } => "JsonError",
            Error::Wav { .. } => "WavError",
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
