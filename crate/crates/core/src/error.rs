use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("format error in {}: {reason}", .path.display())]
    Format { path: PathBuf, reason: String },

    #[error("metadata error: {0}")]
    Metadata(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {}: {source}", .path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("index error: {0}")]
    Index(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("row {row} has zero norm")]
    ZeroNormRow { row: usize },

    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("mean residual vector is zero")]
    ZeroMeanResidual,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("explained-variance ratios sum to {sum}, expected 1")]
    BadRatios { sum: f64 },

    #[error("pair {pair} has non-positive neutral duration {duration}")]
    NonPositiveDuration { pair: usize, duration: f64 },

    #[error("target is constant: {0}")]
    ConstantTarget(String),

    #[error("ridge system is singular at k={k}")]
    SingularSystem { k: usize },

    #[error("training split has {n_train} rows, k={k} needs at least {}", .k + 1)]
    SplitTooSmall { n_train: usize, k: usize },

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("incompatible settings: {0}")]
    IncompatibleSettings(String),

    #[error("missing cell: {0}")]
    MissingCell(String),
}

impl Error {
    /// Variant name, used to record failures as data.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "MissingFile",
            Error::Format { .. } => "FormatError",
            Error::Metadata(_) => "MetadataError",
            Error::Invariant(_) => "InvariantError",
            Error::Io { .. } => "IoError",
            Error::Json { .. } => "JsonError",
            Error::Index(_) => "IndexError",
            Error::Shape(_) => "ShapeError",
            Error::ZeroNormRow { .. } => "ZeroNormRow",
            Error::TooFewRows { .. } => "TooFewRows",
            Error::ZeroMeanResidual => "ZeroMeanResidual",
            Error::DegenerateInput(_) => "DegenerateInput",
            Error::NonFinite(_) => "NonFinite",
            Error::BadRatios { .. } => "BadRatios",
            Error::NonPositiveDuration { .. } => "NonPositiveDuration",
            Error::ConstantTarget(_) => "ConstantTarget",
            Error::SingularSystem { .. } => "SingularSystem",
            Error::SplitTooSmall { .. } => "SplitTooSmall",
            Error::EmptySplit(_) => "EmptySplit",
            Error::Config(_) => "ConfigError",
            Error::IncompatibleSettings(_) => "IncompatibleSettings",
            Error::MissingCell(_) => "MissingCell",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
