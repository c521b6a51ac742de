use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Model capability a provider failure is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Capability {
    Embedding,
    VisionLanguage,
    Depth,
    Transcription,
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Capability::Embedding => "embedding",
            Capability::VisionLanguage => "vision-language",
            Capability::Depth => "depth",
            Capability::Transcription => "transcription",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("UNREADABLE_SOURCE: {0}")]
    UnreadableSource(String),
    #[error("EMPTY_VIDEO: source has zero duration")]
    EmptyVideo,
    #[error("NO_AUDIO_TRACK")]
    NoAudioTrack,
    #[error("INVALID_ARGUMENT: {0}")]
    InvalidArgument(String),
    #[error("PROVIDER_FAILURE: {capability} provider failed after {retries} retries: {message}")]
    Provider {
        capability: Capability,
        retries: u32,
        message: String,
    },
    #[error("DIM_MISMATCH: expected dimension {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("SCHEMA_VIOLATION: response for schema `{schema}` rejected: {detail}")]
    SchemaViolation { schema: String, detail: String },
    #[error("ZERO_VECTOR")]
    ZeroVector,
    #[error("MISMATCHED_SOURCE: filtered sets cover {left} and {right} frames")]
    MismatchedSource { left: usize, right: usize },
    #[error("CYCLE_DETECTED: {0}")]
    CycleDetected(String),
    #[error("INVALID_GRAPH: {0}")]
    InvalidGraph(String),
    #[error("DIMENSION_MISMATCH: {0}")]
    DimensionMismatch(String),
    #[error("EMPTY_CONTENT: {0}")]
    EmptyContent(String),
    #[error("DANGLING_REFERENCE: {0}")]
    DanglingReference(String),
    #[error("SCHEMA_VERSION_UNSUPPORTED: {0}")]
    SchemaVersionUnsupported(String),
    #[error("VALIDATION_FAILED at `{path}`: {message}")]
    ValidationFailed { path: String, message: String },
    #[error("MISSING_ASSET: {0}")]
    MissingAsset(String),
    #[error("CONFIG: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code for the error class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnreadableSource(_) => "UNREADABLE_SOURCE",
            Error::EmptyVideo => "EMPTY_VIDEO",
            Error::NoAudioTrack => "NO_AUDIO_TRACK",
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
            Error::Provider { .. } => "PROVIDER_FAILURE",
            Error::DimMismatch { .. } => "DIM_MISMATCH",
            Error::SchemaViolation { .. } => "SCHEMA_VIOLATION",
            Error::ZeroVector => "ZERO_VECTOR",
            Error::MismatchedSource { .. } => "MISMATCHED_SOURCE",
            Error::CycleDetected(_) => "CYCLE_DETECTED",
            Error::InvalidGraph(_) => "INVALID_GRAPH",
            Error::DimensionMismatch(_) => "DIMENSION_MISMATCH",
            Error::EmptyContent(_) => "EMPTY_CONTENT",
            Error::DanglingReference(_) => "DANGLING_REFERENCE",
            Error::SchemaVersionUnsupported(_) => "SCHEMA_VERSION_UNSUPPORTED",
            Error::ValidationFailed { .. } => "VALIDATION_FAILED",
            Error::MissingAsset(_) => "MISSING_ASSET",
            Error::Config(_) => "CONFIG",
            Error::Io(_) => "IO",
        }
    }

    pub(crate) fn provider(capability: Capability, retries: u32, message: impl Into<String>) -> Self {
        Error::Provider {
            capability,
            retries,
            message: message.into(),
        }
    }

    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ValidationFailed {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Non-fatal diagnostics accumulated while a job runs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Warnings(Vec<String>);

impl Warnings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, message: impl Into<String>) {
        let message = message.into();
        tracing::warn!("{message}");
        self.0.push(message);
    }

    pub fn extend(&mut self, other: Warnings) {
        self.0.extend(other.0);
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.0.iter().any(|w| w.contains(needle))
    }

    pub fn into_vec(self) -> Vec<String> {
        self.0
    }
}
