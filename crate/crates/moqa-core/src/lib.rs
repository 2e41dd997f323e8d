//! Opinion-backed question answering over product reviews.
//!
//! The model treats each review sentence as a voter: a learned relevance
//! function turns review sentences into a softmax distribution per question,
//! and a learned vote function lets each sentence push toward an answer.
//! Binary questions mix per-sentence yes probabilities under that
//! distribution; open-ended questions rank candidate answers by their mixed
//! vote score. Both functions share a feature design of text-similarity
//! features, elementwise word interactions, and a low-rank bilinear term,
//! trained jointly with L-BFGS.
//!
//! Modules:
//! - [`corpus`]: documents, questions, splits, ingest, and on-disk layout
//! - [`textproc`]: tokenization, vocabulary, sparse bag-of-words vectors
//! - [`simfeat`]: cosine, BM25+, and longest-common-subsequence features
//! - [`model`]: parameters, scoring, persistence, projection caches
//! - [`optim`]: L-BFGS with strong Wolfe line search
//! - [`train`]: joint training objectives for both answer modes
//! - [`label`]: heuristic yes/no question detection and answer polarity
//! - [`eval`]: accuracy, confidence-ranked accuracy, AUC, baselines
//! - [`synth`]: synthetic corpora with planted structure and oracles

pub mod corpus;
pub mod error;
pub mod eval;
pub mod label;
pub mod model;
pub mod numerics;
pub mod optim;
pub mod simfeat;
pub mod synth;
pub mod textproc;
pub mod train;

pub use corpus::{Corpus, DocSource, IngestReport, Polarity, QaRecord, ReviewDoc, Split, Splits};
pub use error::{MoqaError, Result};
pub use eval::{BaselineRun, BaselineSpec, EvalConfig, EvalResult};
pub use label::{LabelReport, LabelerConfig, PolarityModel};
pub use model::{
    Mode, ModelConfig, ProjectionCache, QueryScores, RankedOpinion, RelevanceParams, TrainedModel,
    VoteParams,
};
pub use simfeat::{Bm25Config, SimilarityFeatures};
pub use synth::{SynthConfig, SyntheticTruth};
pub use textproc::{BowVector, CorpusStats, TextRepr, Vocabulary};
pub use train::{TrainConfig, TrainReport};
