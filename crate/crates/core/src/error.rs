use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema: {0}")]
    Schema(String),

    #[error("corpus: {0}")]
    Corpus(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    BadNumber {
        row: usize,
        column: String,
        value: String,
    },

    #[error("missing indicator `{0}`")]
    MissingIndicator(String),

    #[error("unknown alternative `{value}` for parameter `{param}`")]
    UnknownAlternative { param: String, value: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training set contains a single class")]
    SingleClass,

    #[error("dimension mismatch: expected {expected} columns, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("feature encoding mismatch: {0}")]
    EncodingMismatch(String),

    #[error("unsupported forest format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt forest file: {0}")]
    CorruptFile(String),

    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("checksum conflict on {}: recorded {recorded}, found {found}", .path.display())]
    ChecksumConflict {
        path: PathBuf,
        recorded: String,
        found: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("analysis: {0}")]
    Analysis(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable kebab-case identifier of the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema",
            Error::Corpus(_) => "corpus",
            Error::MissingColumn(_) => "missing-column",
            Error::BadNumber { .. } => "bad-number",
            Error::MissingIndicator(_) => "missing-indicator",
            Error::UnknownAlternative { .. } => "unknown-alternative",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::SingleClass => "single-class",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::EncodingMismatch(_) => "encoding-mismatch",
            Error::VersionMismatch { .. } => "version-mismatch",
            Error::CorruptFile(_) => "corrupt-file",
            Error::MissingArtifact(_) => "missing-artifact",
            Error::ChecksumConflict { .. } => "checksum-conflict",
            Error::Config(_) => "config",
            Error::Analysis(_) => "analysis",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
