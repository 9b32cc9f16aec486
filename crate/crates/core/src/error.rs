use std::path::PathBuf;

/// Errors produced anywhere in the core library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("softmax row {row} is fully masked")]
    FullyMaskedRow { row: usize },

    #[error("{table} id {id} out of range (table has {size} rows)")]
    IdOutOfRange {
        table: &'static str,
        id: usize,
        size: usize,
    },

    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("backward root is not finite ({0})")]
    NonFiniteRoot(f64),

    #[error("non-finite gradient in parameter `{name}`; step rejected")]
    NonFiniteGradient { name: String },

    #[error("turn {turn} out of range for dialogue `{dialogue}` with {len} turns")]
    TurnOutOfRange {
        dialogue: String,
        turn: usize,
        len: usize,
    },

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("dialogue `{0}`: source and target turn counts differ")]
    Misaligned(String),

    #[error("record `{id}`: {reason}")]
    RecordMismatch { id: String, reason: String },

    #[error("empty batch")]
    EmptyBatch,

    #[error("missing corpus binding `{0}`")]
    MissingCorpus(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("stage {stage} refuses input checkpoint tagged {found}: {reason}")]
    StageGate {
        stage: u8,
        found: String,
        reason: String,
    },

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("{0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
