use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class; the command-line front end maps it to an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("every position is ignored; loss is undefined")]
    EmptyBatch,
    #[error("backward requires a scalar loss, got {0} elements")]
    NotScalar(usize),
    #[error("invalid config `{field}`: {message}")]
    InvalidConfig { field: String, message: String },
    #[error("unknown band `{0}`")]
    UnknownBand(String),
    #[error("bad magic in {0}")]
    BadMagic(String),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("unsupported dtype: {0}")]
    UnsupportedDtype(String),
    #[error("tile outputs do not match grid: {0}")]
    GridMismatch(String),
    #[error("dataset split `{0}` has no samples")]
    EmptyDataset(String),
    #[error("checkpoint width {checkpoint} does not match target width {target}")]
    WidthMismatch { checkpoint: usize, target: usize },
    #[error("checkpoint is missing tensor `{0}`")]
    MissingTensor(String),
    #[error("unsupported or corrupt checkpoint: {0}")]
    VersionMismatch(String),
    #[error("class id {value} out of range for {classes} classes")]
    ClassOutOfRange { value: usize, classes: usize },
    #[error("numeric failure: {0}")]
    NumericFailure(String),
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig { field: field.into(), message: message.into() }
    }

    pub fn shape(message: impl Into<String>) -> Self {
        Error::ShapeMismatch(message.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig { .. }
            | Error::UnknownBand(_)
            | Error::WidthMismatch { .. }
            | Error::ShapeMismatch(_) => ErrorClass::Config,
            Error::NumericFailure(_) => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }

    /// Name of the offending field for config errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::InvalidConfig { field, .. } => Some(field),
            Error::UnknownBand(_) => Some("bands"),
            Error::WidthMismatch { .. } => Some("width"),
            _ => None,
        }
    }
}
