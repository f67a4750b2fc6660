use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: non-finite value in output")]
    NonFinite { op: &'static str },
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("parameter layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("example {example}: token id {token} out of vocabulary (size {vocab})")]
    OutOfVocab {
        example: usize,
        token: usize,
        vocab: usize,
    },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("corpus generation: {0}")]
    Corpus(String),
    #[error("sampling: {0}")]
    Sampling(String),
    #[error("PCA: data rank {achieved} is below the requested {requested} dimensions")]
    RankDeficient { achieved: usize, requested: usize },
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
