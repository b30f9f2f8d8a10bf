use std::path::PathBuf;

use serde_json::json;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] wordspot_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: cannot decode image: {message}")]
    Image { path: PathBuf, message: String },
    #[error("{context}: {source}")]
    Json { context: String, source: serde_json::Error },
    #[error("format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("corrupt model: {0}")]
    CorruptModel(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json { context: context.into(), source }
    }

    /// Short machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        use wordspot_core::Error as C;
        match self {
            Error::Core(e) => match e {
                C::EmptyLabel => "empty_label",
                C::UnknownSymbol(_) => "unknown_symbol",
                C::DegenerateBox => "degenerate_box",
                C::OversizedBox => "oversized_box",
                C::NoPositives => "no_positives",
                C::ZeroVector => "zero_vector",
                C::NonBinaryTarget => "non_binary_target",
                C::DimensionMismatch { .. } => "dimension_mismatch",
                C::EmptyCorpus => "empty_corpus",
                C::WordTooLarge { .. } => "word_too_large",
                C::NoRelevantInstances => "no_relevant_instances",
                C::UnknownPage(_) => "unknown_page",
                C::InvalidConfig(_) => "invalid_config",
            },
            Error::Io { .. } => "io",
            Error::Image { .. } => "image",
            Error::Json { .. } => "json",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::CorruptIndex(_) => "corrupt_index",
            Error::CorruptModel(_) => "corrupt_model",
            Error::Usage(_) => "usage",
            Error::Internal(_) => "internal",
        }
    }

    /// Process exit code: 1 for user errors, 2 for internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Internal(_) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": self.kind(), "message": self.to_string() })
    }
}
