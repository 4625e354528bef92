use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at `{layer}`: expected {expected}, got {got}")]
    ShapeMismatch { layer: String, expected: String, got: String },
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error("duplicate layer name `{0}`")]
    DuplicateLayerName(String),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("backward called on an empty tape")]
    EmptyTape,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("gradient keys do not match parameter keys (`{0}`)")]
    KeyMismatch(String),
    #[error("resolution {height}x{width} is too small (minimum {min}x{min})")]
    ResolutionTooSmall { height: usize, width: usize, min: usize },
    #[error("invalid train fraction {0}; must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("invalid dataset parameter: {0}")]
    InvalidDataset(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("bad manifest row at line {line}: {reason}")]
    BadManifestRow { line: usize, reason: String },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("expected a {expected} dataset, got {got}")]
    TaskMismatch { expected: String, got: String },
    #[error("expected {expected} classes, dataset has {got}")]
    ClassCountMismatch { expected: usize, got: usize },
    #[error("wrong checkpoint phase: expected {expected}, got {got}")]
    WrongPhase { expected: String, got: String },
    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("series has {len} epochs, window needs {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("cannot compare a `{a}` run with a `{b}` run")]
    IncomparablePhases { a: String, b: String },
    #[error("metric `{0}` is absent from a report")]
    MetricAbsent(String),
    #[error("malformed report: {0}")]
    BadReport(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(
        layer: impl Into<String>,
        expected: impl std::fmt::Display,
        got: impl std::fmt::Display,
    ) -> Self {
        Error::ShapeMismatch { layer: layer.into(), expected: expected.to_string(), got: got.to_string() }
    }
}
