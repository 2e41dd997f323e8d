//! Evaluation metrics and the baseline family.
//!
//! Binary questions report accuracy and a confidence curve: accuracy over
//! the top fraction of questions ranked by |p - 1/2|. Open-ended questions
//! report AUC: the fraction of sampled non-answers the true answer outranks,
//! with ties credited half, averaged over questions.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, DocSource, Polarity, Split};
use crate::error::{MoqaError, Result};
use crate::model::{
    pairwise_answer_pref, score_product, Mode, ModelConfig, ProjectionCache, TrainedModel,
};
use crate::numerics::{dot, softmax};
use crate::simfeat::{self, Bm25Config, SimilarityFeatures};
use crate::textproc::{CorpusStats, TextRepr, Vocabulary};
use crate::train::{sample_non_answers_rng, train_frozen, FreezeSpec, TrainConfig};

/// Evaluation settings.
#[derive(Debug, Clone, Copy)]
pub struct EvalConfig {
    pub split: Split,
    /// Non-answers sampled per open-ended question.
    pub negatives: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> EvalConfig {
        EvalConfig {
            split: Split::Test,
            negatives: 100,
            seed: 0,
        }
    }
}

/// One metric over one split.
#[derive(Debug, Clone)]
pub struct EvalResult {
    pub metric: String,
    pub baseline: String,
    pub split: String,
    pub value: f64,
    /// Questions evaluated.
    pub n: usize,
    /// (keep fraction, accuracy at that fraction) deciles; empty for AUC.
    pub curve: Vec<(f64, f64)>,
}

/// Fraction of correct predictions. A prediction of exactly 1/2 counts as
/// incorrect for either label.
pub fn accuracy(predictions: &[(f64, Polarity)]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(MoqaError::EmptyEvalSet);
    }
    let correct = predictions
        .iter()
        .filter(|(p, label)| match label {
            Polarity::Yes => *p > 0.5,
            Polarity::No => *p < 0.5,
        })
        .count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// Accuracy over the ceil(k * n) most confident predictions, confidence
/// being |p - 1/2|. Ties keep input order, so accuracy_at_k(1.0) equals
/// accuracy exactly.
pub fn accuracy_at_k(predictions: &[(f64, Polarity)], k: f64) -> Result<f64> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(MoqaError::InvalidInput(format!(
            "confidence fraction must be in (0, 1], got {k}"
        )));
    }
    if predictions.is_empty() {
        return Err(MoqaError::EmptyEvalSet);
    }
    let keep = ((k * predictions.len() as f64).ceil() as usize).min(predictions.len());
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| {
        let ca = (predictions[a].0 - 0.5).abs();
        let cb = (predictions[b].0 - 0.5).abs();
        cb.partial_cmp(&ca)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let subset: Vec<(f64, Polarity)> = order[..keep].iter().map(|&i| predictions[i]).collect();
    accuracy(&subset)
}

/// Accuracy at each decile of the confidence ranking.
pub fn confidence_curve(predictions: &[(f64, Polarity)]) -> Result<Vec<(f64, f64)>> {
    (1..=10)
        .map(|d| {
            let k = d as f64 / 10.0;
            Ok((k, accuracy_at_k(predictions, k)?))
        })
        .collect()
}

/// AUC credit for one preference value against 1/2.
fn pref_credit(pref: f64) -> f64 {
    if pref > 0.5 {
        1.0
    } else if pref == 0.5 {
        0.5
    } else {
        0.0
    }
}

/// AUC credit comparing a true answer's score against one non-answer's.
fn score_credit(true_score: f64, other: f64) -> f64 {
    if true_score > other {
        1.0
    } else if true_score == other {
        0.5
    } else {
        0.0
    }
}

/// Per-question AUC from pairwise preferences against each non-answer.
pub fn auc_from_prefs(prefs: &[f64]) -> Result<f64> {
    if prefs.is_empty() {
        return Err(MoqaError::EmptyEvalSet);
    }
    Ok(prefs.iter().map(|&p| pref_credit(p)).sum::<f64>() / prefs.len() as f64)
}

/// Per-question AUC from raw candidate scores.
pub fn auc_from_scores(true_score: f64, non_answer_scores: &[f64]) -> Result<f64> {
    if non_answer_scores.is_empty() {
        return Err(MoqaError::EmptyEvalSet);
    }
    Ok(non_answer_scores
        .iter()
        .map(|&s| score_credit(true_score, s))
        .sum::<f64>()
        / non_answer_scores.len() as f64)
}

/// Binary predictions of a trained model over a split, in split order.
/// Unlabeled questions and questions without documents are skipped.
pub fn binary_predictions(
    model: &TrainedModel,
    corpus: &Corpus,
    cache: &ProjectionCache,
    split: Split,
) -> Result<Vec<(f64, Polarity)>> {
    let mut out = Vec::new();
    for &qa_i in corpus.split_indices(split) {
        let record = &corpus.qa()[qa_i];
        let Some(label) = record.binary_label else {
            continue;
        };
        if corpus
            .docs_for(&record.product_id, model.config.source)
            .is_empty()
        {
            continue;
        }
        let q = model.prepare(&record.question);
        let scores = score_product(&q, &record.product_id, model, cache)?;
        let p = crate::model::binary_answer_prob(&scores.rel_probs, &scores.votes);
        out.push((p, label));
    }
    if out.is_empty() {
        return Err(MoqaError::EmptyEvalSet);
    }
    Ok(out)
}

/// Candidate answer representations and projections, built lazily per
/// question index.
struct AnswerCache<'a> {
    model: &'a TrainedModel,
    corpus: &'a Corpus,
    cached: HashMap<usize, (TextRepr, Vec<f64>)>,
}

impl<'a> AnswerCache<'a> {
    fn new(model: &'a TrainedModel, corpus: &'a Corpus) -> AnswerCache<'a> {
        AnswerCache {
            model,
            corpus,
            cached: HashMap::new(),
        }
    }

    fn get(&mut self, qa_i: usize) -> &(TextRepr, Vec<f64>) {
        let (model, corpus) = (self.model, self.corpus);
        self.cached.entry(qa_i).or_insert_with(|| {
            let repr = model.prepare(&corpus.qa()[qa_i].answer);
            let proj = model.votes.x.project(&repr.unit);
            (repr, proj)
        })
    }
}

/// Mean test AUC of a trained open-ended model. Non-answers are drawn from
/// the whole corpus answer pool, excluding each question's own answer.
pub fn open_auc(
    model: &TrainedModel,
    corpus: &Corpus,
    cache: &ProjectionCache,
    ecfg: &EvalConfig,
) -> Result<(f64, usize)> {
    let pool: Vec<usize> = (0..corpus.qa().len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(ecfg.seed);
    let mut answers = AnswerCache::new(model, corpus);
    let mut total = 0.0;
    let mut n = 0usize;
    for &qa_i in corpus.split_indices(ecfg.split) {
        let record = &corpus.qa()[qa_i];
        if corpus
            .docs_for(&record.product_id, model.config.source)
            .is_empty()
        {
            continue;
        }
        let q = model.prepare(&record.question);
        let scores = score_product(&q, &record.product_id, model, cache)?;
        let reviews = cache.reviews(&record.product_id).expect("product scored");
        let negs = sample_non_answers_rng(qa_i, &pool, ecfg.negatives, &mut rng)?;

        let own_votes: Vec<f64> = {
            let (own_repr, own_proj) = answers.get(qa_i);
            reviews
                .iter()
                .map(|r| {
                    own_repr.unit.weighted_dot(&r.repr.unit, &model.votes.vartheta)
                        + dot(own_proj, &r.proj_y)
                })
                .collect()
        };
        let mut prefs = Vec::with_capacity(negs.len());
        for &neg_i in &negs {
            let (neg_repr, neg_proj) = answers.get(neg_i);
            let diffs: Vec<f64> = reviews
                .iter()
                .enumerate()
                .map(|(j, r)| {
                    let neg_vote = neg_repr
                        .unit
                        .weighted_dot(&r.repr.unit, &model.votes.vartheta)
                        + dot(neg_proj, &r.proj_y);
                    own_votes[j] - neg_vote
                })
                .collect();
            prefs.push(pairwise_answer_pref(&scores.rel_probs, &diffs));
        }
        total += auc_from_prefs(&prefs)?;
        n += 1;
    }
    if n == 0 {
        return Err(MoqaError::EmptyEvalSet);
    }
    Ok((total / n as f64, n))
}

/// Evaluate an already-trained model in its own mode.
pub fn eval_trained(
    model: &TrainedModel,
    corpus: &Corpus,
    ecfg: &EvalConfig,
    baseline_name: &str,
) -> Result<EvalResult> {
    let cache = ProjectionCache::build(corpus, model);
    match model.config.mode {
        Mode::Binary => {
            let preds = binary_predictions(model, corpus, &cache, ecfg.split)?;
            Ok(EvalResult {
                metric: "accuracy".into(),
                baseline: baseline_name.into(),
                split: ecfg.split.to_string(),
                value: accuracy(&preds)?,
                n: preds.len(),
                curve: confidence_curve(&preds)?,
            })
        }
        Mode::Open => {
            let (auc, n) = open_auc(model, corpus, &cache, ecfg)?;
            Ok(EvalResult {
                metric: "auc".into(),
                baseline: baseline_name.into(),
                split: ecfg.split.to_string(),
                value: auc,
                n,
                curve: Vec::new(),
            })
        }
    }
}

/// The baseline family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaselineKind {
    /// Uniform random scores.
    Random,
    /// Fixed similarity features, no training; open-ended only.
    Feature { features: [bool; 3] },
    /// The trained model with some blocks frozen, or the full model.
    Learned {
        features: [bool; 3],
        rel_diag: bool,
        low_rank: bool,
        source: DocSource,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaselineSpec {
    pub name: String,
    pub kind: BaselineKind,
}

impl BaselineSpec {
    /// Parse a baseline name: `rand`, a subset of `c`/`r`/`o` (cosine,
    /// bm25, rouge) optionally suffixed `-L` for the learned variant,
    /// `moqa`, or `mdqa`.
    pub fn parse(name: &str) -> Result<BaselineSpec> {
        let spec = |kind| {
            Ok(BaselineSpec {
                name: name.to_string(),
                kind,
            })
        };
        match name {
            "rand" => {
                return spec(BaselineKind::Random);
            }
            "moqa" => {
                return spec(BaselineKind::Learned {
                    features: [true; 3],
                    rel_diag: true,
                    low_rank: true,
                    source: DocSource::Review,
                });
            }
            "mdqa" => {
                return spec(BaselineKind::Learned {
                    features: [true; 3],
                    rel_diag: true,
                    low_rank: true,
                    source: DocSource::Description,
                });
            }
            _ => {}
        }
        let (feature_part, learned) = match name.strip_suffix("-L") {
            Some(prefix) => (prefix, true),
            None => (name, false),
        };
        let mut features = [false; 3];
        for c in feature_part.chars() {
            match c {
                'c' => features[0] = true,
                'r' => features[1] = true,
                'o' => features[2] = true,
                _ => {
                    return Err(MoqaError::InvalidInput(format!(
                        "unknown baseline {name:?}"
                    )))
                }
            }
        }
        if feature_part.is_empty() {
            return Err(MoqaError::InvalidInput(format!("unknown baseline {name:?}")));
        }
        if learned {
            spec(BaselineKind::Learned {
                features,
                rel_diag: features[0],
                low_rank: false,
                source: DocSource::Review,
            })
        } else {
            spec(BaselineKind::Feature { features })
        }
    }
}

fn feature_sum(active: &[bool; 3], feats: &SimilarityFeatures) -> f64 {
    let values = feats.as_array();
    active
        .iter()
        .zip(values)
        .filter(|(&on, _)| on)
        .map(|(_, v)| v)
        .sum()
}

fn random_binary(corpus: &Corpus, ecfg: &EvalConfig, name: &str) -> Result<EvalResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(ecfg.seed);
    let mut preds = Vec::new();
    for &qa_i in corpus.split_indices(ecfg.split) {
        let record = &corpus.qa()[qa_i];
        let Some(label) = record.binary_label else {
            continue;
        };
        if corpus.docs_for(&record.product_id, DocSource::Review).is_empty() {
            continue;
        }
        preds.push((rng.gen::<f64>(), label));
    }
    Ok(EvalResult {
        metric: "accuracy".into(),
        baseline: name.into(),
        split: ecfg.split.to_string(),
        value: accuracy(&preds)?,
        n: preds.len(),
        curve: confidence_curve(&preds)?,
    })
}

fn random_open(corpus: &Corpus, ecfg: &EvalConfig, name: &str) -> Result<EvalResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(ecfg.seed);
    let mut total = 0.0;
    let mut n = 0usize;
    for &qa_i in corpus.split_indices(ecfg.split) {
        let record = &corpus.qa()[qa_i];
        if corpus.docs_for(&record.product_id, DocSource::Review).is_empty() {
            continue;
        }
        let true_score = rng.gen::<f64>();
        let others: Vec<f64> = (0..ecfg.negatives).map(|_| rng.gen::<f64>()).collect();
        total += auc_from_scores(true_score, &others)?;
        n += 1;
    }
    if n == 0 {
        return Err(MoqaError::EmptyEvalSet);
    }
    Ok(EvalResult {
        metric: "auc".into(),
        baseline: name.into(),
        split: ecfg.split.to_string(),
        value: total / n as f64,
        n,
        curve: Vec::new(),
    })
}

/// Non-learning feature baseline, open-ended: relevance is the softmax of
/// the raw feature sum between question and review, and each candidate
/// answer scores the relevance-weighted feature sum between the candidate
/// and the reviews.
fn feature_open(
    corpus: &Corpus,
    features: &[bool; 3],
    cfg: &ModelConfig,
    bm25: &Bm25Config,
    ecfg: &EvalConfig,
    name: &str,
) -> Result<EvalResult> {
    let vocab = Vocabulary::build(corpus, cfg.f, DocSource::Review)?;
    let stats = CorpusStats::compute(corpus, &vocab, DocSource::Review)?;
    let mut product_reviews: HashMap<&str, Vec<TextRepr>> = HashMap::new();
    for product in corpus.product_ids(DocSource::Review) {
        let reviews = corpus
            .docs_for(product, DocSource::Review)
            .iter()
            .map(|&i| TextRepr::from_tokens(corpus.docs()[i].tokens.clone(), &vocab))
            .collect();
        product_reviews.insert(product, reviews);
    }
    let mut answer_reprs: HashMap<usize, TextRepr> = HashMap::new();
    let pool: Vec<usize> = (0..corpus.qa().len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(ecfg.seed);
    let mut total = 0.0;
    let mut n = 0usize;

    for &qa_i in corpus.split_indices(ecfg.split) {
        let record = &corpus.qa()[qa_i];
        let Some(reviews) = product_reviews.get(record.product_id.as_str()) else {
            continue;
        };
        let q = TextRepr::new(&record.question, &vocab);
        let scores: Vec<f64> = reviews
            .iter()
            .map(|r| feature_sum(features, &simfeat::features(&q, r, &vocab, &stats, bm25)))
            .collect();
        let rel = softmax(&scores);
        let candidate_score = |qa: usize, answers: &mut HashMap<usize, TextRepr>| {
            let repr = answers
                .entry(qa)
                .or_insert_with(|| TextRepr::new(&corpus.qa()[qa].answer, &vocab));
            reviews
                .iter()
                .zip(&rel)
                .map(|(r, &p)| {
                    p * feature_sum(features, &simfeat::features(repr, r, &vocab, &stats, bm25))
                })
                .sum::<f64>()
        };
        let true_score = candidate_score(qa_i, &mut answer_reprs);
        let negs = sample_non_answers_rng(qa_i, &pool, ecfg.negatives, &mut rng)?;
        let others: Vec<f64> = negs
            .iter()
            .map(|&ni| candidate_score(ni, &mut answer_reprs))
            .collect();
        total += auc_from_scores(true_score, &others)?;
        n += 1;
    }
    if n == 0 {
        return Err(MoqaError::EmptyEvalSet);
    }
    Ok(EvalResult {
        metric: "auc".into(),
        baseline: name.into(),
        split: ecfg.split.to_string(),
        value: total / n as f64,
        n,
        curve: Vec::new(),
    })
}

/// A baseline evaluation, with the trained model when one was fit.
pub struct BaselineRun {
    pub result: EvalResult,
    pub model: Option<TrainedModel>,
}

/// Train (if needed) and evaluate one baseline.
pub fn run_baseline(
    spec: &BaselineSpec,
    corpus: &Corpus,
    mode: Mode,
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    bm25: &Bm25Config,
    ecfg: &EvalConfig,
) -> Result<BaselineRun> {
    match &spec.kind {
        BaselineKind::Random => {
            let result = match mode {
                Mode::Binary => random_binary(corpus, ecfg, &spec.name)?,
                Mode::Open => random_open(corpus, ecfg, &spec.name)?,
            };
            Ok(BaselineRun {
                result,
                model: None,
            })
        }
        BaselineKind::Feature { features } => match mode {
            Mode::Binary => Err(MoqaError::UnsupportedMode {
                baseline: spec.name.clone(),
                mode: mode.to_string(),
            }),
            Mode::Open => Ok(BaselineRun {
                result: feature_open(corpus, features, cfg, bm25, ecfg, &spec.name)?,
                model: None,
            }),
        },
        BaselineKind::Learned {
            features,
            rel_diag,
            low_rank,
            source,
        } => {
            let model_cfg = ModelConfig {
                mode,
                source: *source,
                ..*cfg
            };
            let freeze = FreezeSpec {
                theta_active: *features,
                rel_diag_active: *rel_diag,
                low_rank_active: *low_rank,
            };
            let (model, _report) = train_frozen(corpus, &model_cfg, tcfg, bm25, &freeze)?;
            let result = eval_trained(&model, corpus, ecfg, &spec.name)?;
            Ok(BaselineRun {
                result,
                model: Some(model),
            })
        }
    }
}

/// Render results as CSV: a header, one row per metric, and one row per
/// confidence decile for binary results.
pub fn results_to_csv(results: &[EvalResult]) -> String {
    let mut out = String::from("metric,baseline,split,value,n\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{},{:.6},{}\n",
            r.metric, r.baseline, r.split, r.value, r.n
        ));
        for &(k, acc) in &r.curve {
            let keep = ((k * r.n as f64).ceil() as usize).min(r.n);
            out.push_str(&format!(
                "{}@{:.1},{},{},{:.6},{}\n",
                r.metric, k, r.baseline, r.split, acc, keep
            ));
        }
    }
    out
}
