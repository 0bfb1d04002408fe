use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty document set")]
    EmptyDocumentSet,
    #[error("empty reference")]
    EmptyReference,
    #[error("token id {token} is outside the vocabulary of size {vocab}")]
    InvalidToken { token: u32, vocab: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty sequence")]
    EmptySequence,
    #[error("relaxed-sample cache is missing; the sample was not produced in gumbel mode")]
    MissingCache,
    #[error("stale control-variate cache (generation {cache}, parameters at {params})")]
    StaleCache { cache: u64, params: u64 },
    #[error("enumeration budget exceeded: {required} sequences required, budget is {budget}")]
    EnumerationBudget { required: u128, budget: u128 },
    #[error("seeds must be distinct")]
    SeedsNotDistinct,
    #[error("at least {required} estimates are needed, got {got}")]
    TooFewSamples { required: usize, got: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("{path}: no valid records ({dropped} lines rejected)")]
    NoValidRecords { path: String, dropped: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by the input data rather than by how the library was called.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Config(_))
    }
}
