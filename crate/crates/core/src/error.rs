use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed input at line {line}: {message}")]
    MalformedInput { line: usize, message: String },

    #[error("no term survives the document-frequency filters")]
    EmptyVocabulary,

    #[error("document has no in-vocabulary tokens")]
    ZeroLengthDocument,

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("malformed embedding header: {0}")]
    MalformedHeader(String),

    #[error("dimension mismatch at line {line}: expected {expected} values, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("cosine similarity of a zero vector")]
    ZeroVector,

    #[error("invalid seed specification: {0}")]
    InvalidSeeds(String),

    #[error("every seed of topic '{0}' is out of vocabulary")]
    AllSeedsOutOfVocabulary(String),

    #[error("guided set is empty: no seed word survived preprocessing")]
    EmptyGuidedSet,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value produced by {0}")]
    NonFiniteValue(String),

    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalarLoss(Vec<usize>),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        /// JSON dump of the offending batch and loss components.
        diagnostic: String,
    },

    #[error("unknown term '{0}'")]
    UnknownTerm(String),

    #[error("gold label '{0}' is not mapped to any topic")]
    UnmappedLabel(String),

    #[error("no valid intruder for topic {0}")]
    CannotFindIntruder(usize),

    #[error("unknown intrusion item id '{0}'")]
    UnknownItemId(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
