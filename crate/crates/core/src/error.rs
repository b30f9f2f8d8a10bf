use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("label is empty after normalization")]
    EmptyLabel,
    #[error("symbol {0:?} is not in the alphabet")]
    UnknownSymbol(char),
    #[error("box has non-positive size")]
    DegenerateBox,
    #[error("box exceeds the page bounds")]
    OversizedBox,
    #[error("no proposal matched a ground-truth box")]
    NoPositives,
    #[error("zero-length vector in a cosine loss")]
    ZeroVector,
    #[error("target vector is not binary")]
    NonBinaryTarget,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("training corpus has no usable samples")]
    EmptyCorpus,
    #[error("word image {width}px wide does not fit a {available}px row")]
    WordTooLarge { width: u32, available: u32 },
    #[error("query has no relevant instances")]
    NoRelevantInstances,
    #[error("unknown page {0:?}")]
    UnknownPage(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
