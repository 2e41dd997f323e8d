//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MoqaError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("no valid records found in {path}")]
    EmptyCorpus { path: String },

    #[error("invalid split fractions {0:?}: must be positive and sum to 1")]
    InvalidFractions([f64; 3]),

    #[error("cannot split {n} questions into three parts")]
    TooFewQuestions { n: usize },

    #[error("empty review set for product {product_id}")]
    EmptyReviewSet { product_id: String },

    #[error("unknown product {0}")]
    UnknownProduct(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("no trainable records: {0}")]
    NoTrainableData(String),

    #[error("training produced a non-finite value: {0}")]
    NonFinite(String),

    #[error("answer pool too small: need more than one answer")]
    PoolTooSmall,

    #[error("polarity training needs at least two examples of each class (yes={yes}, no={no})")]
    SingleClass { yes: usize, no: usize },

    #[error("model file {path} is corrupt or has an unsupported format: {reason}")]
    CorruptModel { path: String, reason: String },

    #[error("baseline {baseline} does not support {mode} evaluation")]
    UnsupportedMode { baseline: String, mode: String },

    #[error("empty evaluation set")]
    EmptyEvalSet,

    #[error("{0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, MoqaError>;
