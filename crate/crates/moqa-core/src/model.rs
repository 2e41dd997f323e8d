//! The relevance/vote mixture model: parameters, scoring, persistence, and
//! the cached fast query path.
//!
//! Relevance of a review sentence r to a question q is
//!
//! ```text
//! s(q, r) = phi(q, r) . theta  +  (psi(q) * psi(r)) . vartheta  +  (psi(q) A) . (psi(r) B)
//! ```
//!
//! where phi are the pairwise similarity features, psi is the unit-normalized
//! bag of words, and A, B are F x K factors of a low-rank word-association
//! map. Softmax over a product's review sentences turns scores into mixture
//! weights. A parallel bilinear form with its own diagonal and factors
//! produces a per-review vote; the weighted vote mixture answers questions.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DocSource};
use crate::error::{MoqaError, Result};
use crate::numerics::{dot, sigmoid, softmax};
use crate::simfeat::{self, Bm25Config, SimilarityFeatures, NUM_SIM_FEATURES};
use crate::textproc::{BowVector, CorpusStats, TextRepr, Vocabulary};

/// Model file schema version.
pub const FORMAT_VERSION: u32 = 1;

/// Which answer task the model was trained for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Binary,
    Open,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "binary" => Some(Mode::Binary),
            "open" => Some(Mode::Open),
            _ => None,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Binary => write!(f, "binary"),
            Mode::Open => write!(f, "open"),
        }
    }
}

/// Model shape and regularization settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Low-rank factor width.
    pub k: usize,
    /// Vocabulary size cap.
    pub f: usize,
    /// L2 regularization strength.
    pub l2: f64,
    /// Seed for parameter init and negative sampling.
    pub seed: u64,
    pub mode: Mode,
    /// Which documents the model reads.
    pub source: DocSource,
}

impl ModelConfig {
    pub fn new(mode: Mode) -> ModelConfig {
        ModelConfig {
            k: 5,
            f: 5000,
            l2: 1e-3,
            seed: 0,
            mode,
            source: DocSource::Review,
        }
    }
}

/// Dense row-major F x K factor matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Factor {
    pub fn zeros(rows: usize, cols: usize) -> Factor {
        Factor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_data(rows: usize, cols: usize, data: Vec<f64>) -> Result<Factor> {
        if data.len() != rows * cols {
            return Err(MoqaError::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
                context: "factor data length".into(),
            });
        }
        Ok(Factor { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Project a sparse vector through the factor: v -> sum_f v[f] * row(f),
    /// a K-vector. Cost is O(nnz(v) * K).
    pub fn project(&self, v: &BowVector) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for &(i, w) in v.entries() {
            let row = self.row(i as usize);
            for (o, r) in out.iter_mut().zip(row) {
                *o += w * r;
            }
        }
        out
    }
}

/// Parameters of the relevance score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceParams {
    /// Similarity feature weights.
    pub theta: [f64; NUM_SIM_FEATURES],
    /// Diagonal of the word-association map.
    pub vartheta: Vec<f64>,
    pub a: Factor,
    pub b: Factor,
}

impl RelevanceParams {
    pub fn zeros(f: usize, k: usize) -> RelevanceParams {
        RelevanceParams {
            theta: [0.0; NUM_SIM_FEATURES],
            vartheta: vec![0.0; f],
            a: Factor::zeros(f, k),
            b: Factor::zeros(f, k),
        }
    }

    fn validate(&self, f: usize, k: usize) -> Result<()> {
        check_dims("relevance vartheta", self.vartheta.len(), f)?;
        check_dims("relevance A rows", self.a.rows, f)?;
        check_dims("relevance A cols", self.a.cols, k)?;
        check_dims("relevance B rows", self.b.rows, f)?;
        check_dims("relevance B cols", self.b.cols, k)?;
        Ok(())
    }
}

/// Parameters of the vote score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteParams {
    /// Diagonal of the vote word-association map.
    pub vartheta: Vec<f64>,
    pub x: Factor,
    pub y: Factor,
}

impl VoteParams {
    pub fn zeros(f: usize, k: usize) -> VoteParams {
        VoteParams {
            vartheta: vec![0.0; f],
            x: Factor::zeros(f, k),
            y: Factor::zeros(f, k),
        }
    }

    fn validate(&self, f: usize, k: usize) -> Result<()> {
        check_dims("vote vartheta", self.vartheta.len(), f)?;
        check_dims("vote X rows", self.x.rows, f)?;
        check_dims("vote X cols", self.x.cols, k)?;
        check_dims("vote Y rows", self.y.rows, f)?;
        check_dims("vote Y cols", self.y.cols, k)?;
        Ok(())
    }
}

fn check_dims(context: &'static str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(MoqaError::DimensionMismatch {
            expected,
            got,
            context,
        });
    }
    Ok(())
}

/// Relevance score of one (question, review) pair given precomputed
/// similarity features.
pub fn relevance_score(
    q: &TextRepr,
    r: &TextRepr,
    feats: &SimilarityFeatures,
    params: &RelevanceParams,
) -> f64 {
    let bilinear = dot(&params.a.project(&q.unit), &params.b.project(&r.unit));
    dot(&params.theta, &feats.as_array()) + q.unit.weighted_dot(&r.unit, &params.vartheta) + bilinear
}

/// Vote value for a (left, review) pair. The left side is the question's unit
/// bag of words in binary mode and an answer's in open-ended mode.
pub fn vote(lhs: &BowVector, r: &BowVector, params: &VoteParams) -> f64 {
    lhs.weighted_dot(r, &params.vartheta) + dot(&params.x.project(lhs), &params.y.project(r))
}

/// Softmax over review scores. Errors on an empty score list.
pub fn relevance_distribution(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(MoqaError::EmptyReviewSet {
            product_id: String::new(),
        });
    }
    Ok(softmax(scores))
}

/// Probability of a "yes" answer: the relevance-weighted mixture of the
/// per-review vote sigmoids.
pub fn binary_answer_prob(rel_probs: &[f64], votes: &[f64]) -> f64 {
    rel_probs
        .iter()
        .zip(votes)
        .map(|(&p, &v)| p * sigmoid(v))
        .sum()
}

/// Probability that answer `a` outranks `abar`: the relevance-weighted
/// mixture of sigmoids of per-review vote differences.
pub fn pairwise_answer_pref(rel_probs: &[f64], vote_diffs: &[f64]) -> f64 {
    rel_probs
        .iter()
        .zip(vote_diffs)
        .map(|(&p, &d)| p * sigmoid(d))
        .sum()
}

/// A trained model bundled with everything needed to score new questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub config: ModelConfig,
    pub bm25: Bm25Config,
    pub vocab: Vocabulary,
    pub stats: CorpusStats,
    pub relevance: RelevanceParams,
    pub votes: VoteParams,
}

impl TrainedModel {
    /// Validate dimensions and parameter finiteness.
    pub fn validate(&self) -> Result<()> {
        let f = self.vocab.size();
        let k = self.config.k;
        self.relevance.validate(f, k)?;
        self.votes.validate(f, k)?;
        check_dims("stats doc_freq", self.stats.doc_freq.len(), f)?;
        let finite = self.relevance.theta.iter().all(|v| v.is_finite())
            && self.relevance.vartheta.iter().all(|v| v.is_finite())
            && self.relevance.a.data.iter().all(|v| v.is_finite())
            && self.relevance.b.data.iter().all(|v| v.is_finite())
            && self.votes.vartheta.iter().all(|v| v.is_finite())
            && self.votes.x.data.iter().all(|v| v.is_finite())
            && self.votes.y.data.iter().all(|v| v.is_finite());
        if !finite {
            return Err(MoqaError::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate().map_err(|e| MoqaError::CorruptModel {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let file = File::create(path).map_err(|e| MoqaError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::to_writer(BufWriter::new(file), self).map_err(|e| MoqaError::CorruptModel {
            path: path.display().to_string(),
            reason: format!("serialization failed: {e}"),
        })
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        let file = File::open(path).map_err(|e| MoqaError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let model: TrainedModel =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| MoqaError::CorruptModel {
                path: path.display().to_string(),
                reason: format!("parse failed: {e}"),
            })?;
        if model.format_version != FORMAT_VERSION {
            return Err(MoqaError::CorruptModel {
                path: path.display().to_string(),
                reason: format!(
                    "format version {} unsupported (expected {FORMAT_VERSION})",
                    model.format_version
                ),
            });
        }
        model.validate().map_err(|e| MoqaError::CorruptModel {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Ok(model)
    }

    pub fn prepare(&self, text: &str) -> TextRepr {
        TextRepr::new(text, &self.vocab)
    }

    /// Relevance scores of a question against each review, the naive
    /// (uncached) path.
    pub fn score_reviews(&self, q: &TextRepr, reviews: &[TextRepr]) -> Vec<f64> {
        reviews
            .iter()
            .map(|r| {
                let feats = simfeat::features(q, r, &self.vocab, &self.stats, &self.bm25);
                relevance_score(q, r, &feats, &self.relevance)
            })
            .collect()
    }

    /// Per-review votes with the question as the left side (binary mode).
    pub fn question_votes(&self, q: &TextRepr, reviews: &[TextRepr]) -> Vec<f64> {
        reviews
            .iter()
            .map(|r| vote(&q.unit, &r.unit, &self.votes))
            .collect()
    }

    /// P(yes) for a question over its review set.
    pub fn binary_prob(&self, q: &TextRepr, reviews: &[TextRepr]) -> Result<f64> {
        let probs = relevance_distribution(&self.score_reviews(q, reviews))?;
        let votes = self.question_votes(q, reviews);
        Ok(binary_answer_prob(&probs, &votes))
    }

    /// P(answer a outranks answer abar) for a question over its review set.
    pub fn answer_pref(
        &self,
        a: &TextRepr,
        abar: &TextRepr,
        q: &TextRepr,
        reviews: &[TextRepr],
    ) -> Result<f64> {
        let probs = relevance_distribution(&self.score_reviews(q, reviews))?;
        let diffs: Vec<f64> = reviews
            .iter()
            .map(|r| {
                vote(&a.unit, &r.unit, &self.votes) - vote(&abar.unit, &r.unit, &self.votes)
            })
            .collect();
        Ok(pairwise_answer_pref(&probs, &diffs))
    }
}

/// One review with its representation and cached factor projections.
#[derive(Debug, Clone, PartialEq)]
pub struct CachedReview {
    /// Index into the corpus document list.
    pub doc_index: usize,
    pub repr: TextRepr,
    /// psi(r) B, for the relevance bilinear term.
    pub proj_b: Vec<f64>,
    /// psi(r) Y, for the vote bilinear term.
    pub proj_y: Vec<f64>,
}

/// Per-product cached review projections. Querying a product then costs
/// O(K + |q| + |r|) per review instead of a pass over the factor matrices.
#[derive(Debug, Clone, Default)]
pub struct ProjectionCache {
    products: HashMap<String, Vec<CachedReview>>,
}

impl ProjectionCache {
    /// Project every document of the model's source once.
    pub fn build(corpus: &Corpus, model: &TrainedModel) -> ProjectionCache {
        let mut products: HashMap<String, Vec<CachedReview>> = HashMap::new();
        for product in corpus.product_ids(model.config.source) {
            let entries = corpus
                .docs_for(product, model.config.source)
                .iter()
                .map(|&doc_index| {
                    let doc = &corpus.docs()[doc_index];
                    let repr = TextRepr::from_tokens(doc.tokens.clone(), &model.vocab);
                    let proj_b = model.relevance.b.project(&repr.unit);
                    let proj_y = model.votes.y.project(&repr.unit);
                    CachedReview {
                        doc_index,
                        repr,
                        proj_b,
                        proj_y,
                    }
                })
                .collect();
            products.insert(product.to_string(), entries);
        }
        ProjectionCache { products }
    }

    pub fn reviews(&self, product_id: &str) -> Option<&[CachedReview]> {
        self.products.get(product_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }
}

/// One ranked review sentence.
#[derive(Debug, Clone)]
pub struct RankedOpinion {
    pub doc_index: usize,
    /// Softmax relevance mass over the product's full review set.
    pub relevance: f64,
    /// Raw relevance score.
    pub score: f64,
    /// Vote value with the question as the left side.
    pub vote: f64,
}

/// Scores of one product's reviews for one question, computed via the cache.
pub struct QueryScores {
    pub rel_probs: Vec<f64>,
    pub scores: Vec<f64>,
    pub votes: Vec<f64>,
}

/// Score a question against a product's cached reviews. Errors on unknown
/// products and products with no reviews.
pub fn score_product(
    q: &TextRepr,
    product_id: &str,
    model: &TrainedModel,
    cache: &ProjectionCache,
) -> Result<QueryScores> {
    let reviews = cache
        .reviews(product_id)
        .ok_or_else(|| MoqaError::UnknownProduct(product_id.to_string()))?;
    if reviews.is_empty() {
        return Err(MoqaError::EmptyReviewSet {
            product_id: product_id.to_string(),
        });
    }
    let proj_a = model.relevance.a.project(&q.unit);
    let proj_x = model.votes.x.project(&q.unit);
    let mut scores = Vec::with_capacity(reviews.len());
    let mut votes = Vec::with_capacity(reviews.len());
    for r in reviews {
        let feats = simfeat::features(q, &r.repr, &model.vocab, &model.stats, &model.bm25);
        let s = dot(&model.relevance.theta, &feats.as_array())
            + q.unit.weighted_dot(&r.repr.unit, &model.relevance.vartheta)
            + dot(&proj_a, &r.proj_b);
        scores.push(s);
        votes.push(q.unit.weighted_dot(&r.repr.unit, &model.votes.vartheta) + dot(&proj_x, &r.proj_y));
    }
    let rel_probs = relevance_distribution(&scores)?;
    Ok(QueryScores {
        rel_probs,
        scores,
        votes,
    })
}

/// Rank a product's review sentences by relevance to a question. Ties keep
/// corpus document order. `top_n` truncates the result; relevance mass is
/// still computed over the full review set.
pub fn rank_opinions(
    question: &str,
    product_id: &str,
    model: &TrainedModel,
    cache: &ProjectionCache,
    top_n: usize,
) -> Result<Vec<RankedOpinion>> {
    let q = model.prepare(question);
    let scored = score_product(&q, product_id, model, cache)?;
    let reviews = cache.reviews(product_id).expect("scored product exists");
    let mut ranked: Vec<RankedOpinion> = reviews
        .iter()
        .enumerate()
        .map(|(j, r)| RankedOpinion {
            doc_index: r.doc_index,
            relevance: scored.rel_probs[j],
            score: scored.scores[j],
            vote: scored.votes[j],
        })
        .collect();
    ranked.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal));
    ranked.truncate(top_n);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{QaRecord, ReviewDoc};
    use crate::textproc::tokenize;
    use proptest::prelude::*;

    fn vocab3() -> Vocabulary {
        Vocabulary::from_terms(vec!["a".into(), "b".into(), "c".into()]).unwrap()
    }

    fn stats3() -> CorpusStats {
        CorpusStats {
            n_docs: 2,
            doc_freq: vec![1, 1, 1],
            avgdl: 2.0,
        }
    }

    #[test]
    fn relevance_distribution_sums_to_one() {
        let p = relevance_distribution(&[1.0, 2.0, 3.0]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(relevance_distribution(&[]).is_err());
    }

    #[test]
    fn relevance_distribution_is_shift_invariant() {
        let a = relevance_distribution(&[1.0, 2.0, 3.0]).unwrap();
        let b = relevance_distribution(&[101.0, 102.0, 103.0]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn binary_prob_is_vote_mixture() {
        let p = binary_answer_prob(&[0.5, 0.5], &[0.0, 0.0]);
        assert!((p - 0.5).abs() < 1e-15);
        let p = binary_answer_prob(&[1.0, 0.0], &[100.0, -100.0]);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_review_gets_all_relevance_mass() {
        let p = relevance_distribution(&[4.2]).unwrap();
        assert_eq!(p, vec![1.0]);
    }

    fn toy_model() -> TrainedModel {
        let vocab = vocab3();
        let f = vocab.size();
        let k = 2;
        let mut relevance = RelevanceParams::zeros(f, k);
        relevance.theta = [0.4, 0.1, 0.2];
        relevance.vartheta = vec![0.3, -0.2, 0.5];
        relevance.a = Factor::from_data(f, k, vec![0.1, 0.2, -0.3, 0.4, 0.0, 0.5]).unwrap();
        relevance.b = Factor::from_data(f, k, vec![-0.2, 0.1, 0.6, -0.1, 0.3, 0.2]).unwrap();
        let mut votes = VoteParams::zeros(f, k);
        votes.vartheta = vec![0.2, 0.1, -0.4];
        votes.x = Factor::from_data(f, k, vec![0.3, -0.2, 0.1, 0.0, -0.5, 0.2]).unwrap();
        votes.y = Factor::from_data(f, k, vec![0.1, 0.4, -0.3, 0.2, 0.0, -0.1]).unwrap();
        TrainedModel {
            format_version: FORMAT_VERSION,
            config: ModelConfig {
                k,
                f,
                l2: 1e-3,
                seed: 0,
                mode: Mode::Binary,
                source: DocSource::Review,
            },
            bm25: Bm25Config::default(),
            vocab,
            stats: stats3(),
            relevance,
            votes,
        }
    }

    #[test]
    fn model_save_load_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = toy_model();
        model.save(&path).unwrap();
        let loaded = TrainedModel::load(&path).unwrap();
        assert_eq!(loaded, model);
    }

    #[test]
    fn load_rejects_garbage_and_bad_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        std::fs::write(&path, "not json at all").unwrap();
        assert!(matches!(
            TrainedModel::load(&path),
            Err(MoqaError::CorruptModel { .. })
        ));

        let mut model = toy_model();
        model.format_version = 999;
        let json = serde_json::to_string(&model).unwrap();
        std::fs::write(&path, json).unwrap();
        assert!(matches!(
            TrainedModel::load(&path),
            Err(MoqaError::CorruptModel { .. })
        ));
    }

    #[test]
    fn save_rejects_non_finite_params() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut model = toy_model();
        model.relevance.vartheta[0] = f64::NAN;
        assert!(matches!(
            model.save(&path),
            Err(MoqaError::CorruptModel { .. })
        ));
    }

    fn toy_corpus() -> Corpus {
        let texts = ["a b", "b c", "c"];
        let docs = texts
            .iter()
            .map(|t| ReviewDoc {
                product_id: "p1".into(),
                text: t.to_string(),
                tokens: tokenize(t),
                source: DocSource::Review,
            })
            .collect();
        let qa = vec![QaRecord {
            product_id: "p1".into(),
            question: "a".into(),
            answer: "b".into(),
            binary_label: None,
        }];
        Corpus::from_parts(docs, qa)
    }

    #[test]
    fn cached_query_matches_naive_path() {
        let model = toy_model();
        let corpus = toy_corpus();
        let cache = ProjectionCache::build(&corpus, &model);
        let q = model.prepare("a b c");
        let reviews: Vec<TextRepr> = corpus
            .docs()
            .iter()
            .map(|d| TextRepr::from_tokens(d.tokens.clone(), &model.vocab))
            .collect();
        let naive = model.score_reviews(&q, &reviews);
        let cached = score_product(&q, "p1", &model, &cache).unwrap();
        for (a, b) in naive.iter().zip(&cached.scores) {
            assert!((a - b).abs() < 1e-12, "naive {a} vs cached {b}");
        }
        let naive_votes = model.question_votes(&q, &reviews);
        for (a, b) in naive_votes.iter().zip(&cached.votes) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_opinions_sorts_and_reports_unknown_product() {
        let model = toy_model();
        let corpus = toy_corpus();
        let cache = ProjectionCache::build(&corpus, &model);
        let ranked = rank_opinions("a b", "p1", &model, &cache, 2).unwrap();
        assert_eq!(ranked.len(), 2);
        assert!(ranked[0].score >= ranked[1].score);
        let total: f64 = ranked.iter().map(|r| r.relevance).sum();
        assert!(total <= 1.0 + 1e-12);
        assert!(matches!(
            rank_opinions("a", "nope", &model, &cache, 2),
            Err(MoqaError::UnknownProduct(_))
        ));
    }

    #[test]
    fn single_review_product_ranks_with_probability_one() {
        let model = toy_model();
        let docs = vec![ReviewDoc {
            product_id: "solo".into(),
            text: "a b".into(),
            tokens: tokenize("a b"),
            source: DocSource::Review,
        }];
        let qa = vec![QaRecord {
            product_id: "solo".into(),
            question: "a".into(),
            answer: "b".into(),
            binary_label: None,
        }];
        let corpus = Corpus::from_parts(docs, qa);
        let cache = ProjectionCache::build(&corpus, &model);
        let ranked = rank_opinions("a", "solo", &model, &cache, 5).unwrap();
        assert_eq!(ranked.len(), 1);
        assert!((ranked[0].relevance - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn binary_prob_bounded_by_vote_sigmoids(
            scores in proptest::collection::vec(-5.0f64..5.0, 1..6),
            votes in proptest::collection::vec(-5.0f64..5.0, 6),
        ) {
            let votes = &votes[..scores.len()];
            let probs = relevance_distribution(&scores).unwrap();
            let p = binary_answer_prob(&probs, votes);
            let lo = votes.iter().copied().map(sigmoid).fold(f64::INFINITY, f64::min);
            let hi = votes.iter().copied().map(sigmoid).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
        }

        #[test]
        fn symmetric_votes_give_half(v in 0.0f64..10.0, s in -3.0f64..3.0) {
            // Two equally relevant reviews with opposite votes.
            let probs = relevance_distribution(&[s, s]).unwrap();
            let p = binary_answer_prob(&probs, &[v, -v]);
            prop_assert!((p - 0.5).abs() < 1e-12);
        }
    }
}
