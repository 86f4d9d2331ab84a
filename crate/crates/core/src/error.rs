use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: line {line}: {message}")]
    Ingest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("undefined input: {0}")]
    UndefinedInput(String),

    #[error("exposure category {0} has no rows")]
    EmptyCategory(&'static str),

    #[error("need at least {needed} stations, got {actual}")]
    TooFewStations { needed: usize, actual: usize },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("feature layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("outside coverage: {0}")]
    OutOfCoverage(String),

    #[error("no path between nodes {from} and {to}")]
    Disconnected { from: usize, to: usize },
}

impl Error {
    /// Stable snake_case name of the variant, for machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Ingest { .. } => "ingest",
            Error::Io { .. } => "io",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::UndefinedInput(_) => "undefined_input",
            Error::EmptyCategory(_) => "empty_category",
            Error::TooFewStations { .. } => "too_few_stations",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::LayoutMismatch(_) => "layout_mismatch",
            Error::UnknownFeature(_) => "unknown_feature",
            Error::UnknownPreset(_) => "unknown_preset",
            Error::ModelFormat(_) => "model_format",
            Error::OutOfCoverage(_) => "out_of_coverage",
            Error::Disconnected { .. } => "disconnected",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn ingest(
        path: impl Into<PathBuf>,
        line: usize,
        message: impl Into<String>,
    ) -> Self {
        Error::Ingest {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
