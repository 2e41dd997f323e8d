//! Training: corpus preparation, loss objectives with analytic gradients,
//! parameter packing, and the outer training loop.
//!
//! Binary questions minimize the negative log-likelihood of the labeled
//! yes/no outcomes under the relevance-weighted vote mixture. Open-ended
//! questions minimize a pairwise logistic loss that asks the model to prefer
//! each question's real answer over sampled non-answers; the non-answers are
//! resampled every round with warm-started parameters in between.

use std::collections::HashMap;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{Corpus, Polarity, Split};
use crate::error::{MoqaError, Result};
use crate::model::{
    Factor, Mode, ModelConfig, RelevanceParams, TrainedModel, VoteParams, FORMAT_VERSION,
};
use crate::numerics::{dot, log_sigmoid, log_sum_exp, sigmoid};
use crate::optim::{minimize, LbfgsConfig};
use crate::simfeat::{self, Bm25Config, SimilarityFeatures, NUM_SIM_FEATURES};
use crate::textproc::{CorpusStats, TextRepr, Vocabulary};

/// Optimizer-facing training settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Non-answer resampling rounds (open-ended mode only).
    pub epochs: usize,
    /// Non-answers sampled per question per round.
    pub negatives_per_query: usize,
    pub lbfgs_history: usize,
    /// L-BFGS iteration cap per sampling round.
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 10,
            negatives_per_query: 10,
            lbfgs_history: 10,
            max_iters: 500,
            grad_tol: 1e-6,
        }
    }
}

/// Flat parameter vector layout:
/// [theta | rel diag | A | B | vote diag | X | Y].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub f: usize,
    pub k: usize,
}

impl ParamLayout {
    pub fn new(f: usize, k: usize) -> ParamLayout {
        ParamLayout { f, k }
    }

    pub fn total(&self) -> usize {
        NUM_SIM_FEATURES + 2 * self.f + 4 * self.f * self.k
    }

    pub fn theta(&self) -> usize {
        0
    }

    pub fn rel_diag(&self) -> usize {
        NUM_SIM_FEATURES
    }

    pub fn rel_a(&self) -> usize {
        self.rel_diag() + self.f
    }

    pub fn rel_b(&self) -> usize {
        self.rel_a() + self.f * self.k
    }

    pub fn vote_diag(&self) -> usize {
        self.rel_b() + self.f * self.k
    }

    pub fn vote_x(&self) -> usize {
        self.vote_diag() + self.f
    }

    pub fn vote_y(&self) -> usize {
        self.vote_x() + self.f * self.k
    }

    pub fn pack(&self, rel: &RelevanceParams, vote: &VoteParams) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.total());
        x.extend_from_slice(&rel.theta);
        x.extend_from_slice(&rel.vartheta);
        x.extend_from_slice(rel.a.data());
        x.extend_from_slice(rel.b.data());
        x.extend_from_slice(&vote.vartheta);
        x.extend_from_slice(vote.x.data());
        x.extend_from_slice(vote.y.data());
        debug_assert_eq!(x.len(), self.total());
        x
    }

    pub fn unpack(&self, x: &[f64]) -> (RelevanceParams, VoteParams) {
        assert_eq!(x.len(), self.total());
        let (f, k) = (self.f, self.k);
        let fk = f * k;
        let mut theta = [0.0; NUM_SIM_FEATURES];
        theta.copy_from_slice(&x[..NUM_SIM_FEATURES]);
        let rel = RelevanceParams {
            theta,
            vartheta: x[self.rel_diag()..self.rel_a()].to_vec(),
            a: Factor::from_data(f, k, x[self.rel_a()..self.rel_a() + fk].to_vec()).unwrap(),
            b: Factor::from_data(f, k, x[self.rel_b()..self.rel_b() + fk].to_vec()).unwrap(),
        };
        let vote = VoteParams {
            vartheta: x[self.vote_diag()..self.vote_x()].to_vec(),
            x: Factor::from_data(f, k, x[self.vote_x()..self.vote_x() + fk].to_vec()).unwrap(),
            y: Factor::from_data(f, k, x[self.vote_y()..self.vote_y() + fk].to_vec()).unwrap(),
        };
        (rel, vote)
    }
}

/// Which parameter blocks train. Frozen blocks stay exactly zero. The vote
/// diagonal always trains; it is the only predictor the factor-free
/// baselines have.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreezeSpec {
    /// Active similarity feature weights, in feature order.
    pub theta_active: [bool; NUM_SIM_FEATURES],
    /// Relevance diagonal (the weighted-cosine word overlap term).
    pub rel_diag_active: bool,
    /// All four factor matrices.
    pub low_rank_active: bool,
}

impl FreezeSpec {
    pub fn full() -> FreezeSpec {
        FreezeSpec {
            theta_active: [true; NUM_SIM_FEATURES],
            rel_diag_active: true,
            low_rank_active: true,
        }
    }

    pub fn mask(&self, layout: &ParamLayout) -> Vec<bool> {
        let mut mask = vec![true; layout.total()];
        for (i, &active) in self.theta_active.iter().enumerate() {
            mask[layout.theta() + i] = active;
        }
        for i in layout.rel_diag()..layout.rel_a() {
            mask[i] = self.rel_diag_active;
        }
        if !self.low_rank_active {
            for i in layout.rel_a()..layout.vote_diag() {
                mask[i] = false;
            }
            for i in layout.vote_x()..layout.total() {
                mask[i] = false;
            }
        }
        mask
    }
}

/// Zero weights and diagonals, small Gaussian factor entries, frozen
/// coordinates forced to zero. Deterministic for a fixed seed.
pub fn init_params(layout: &ParamLayout, seed: u64, mask: &[bool]) -> Vec<f64> {
    let mut x = vec![0.0; layout.total()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.01).unwrap();
    let factor_ranges = [
        layout.rel_a()..layout.vote_diag(),
        layout.vote_x()..layout.total(),
    ];
    for range in factor_ranges {
        for i in range {
            x[i] = normal.sample(&mut rng);
        }
    }
    for (xi, &active) in x.iter_mut().zip(mask) {
        if !active {
            *xi = 0.0;
        }
    }
    x
}

/// One product's review representations.
#[derive(Debug, Clone)]
pub struct PreparedProduct {
    pub product_id: String,
    pub doc_indices: Vec<usize>,
    pub reviews: Vec<TextRepr>,
}

/// One question with precomputed similarity features against its product's
/// reviews.
#[derive(Debug, Clone)]
pub struct PreparedQuestion {
    pub qa_index: usize,
    pub product_slot: usize,
    pub question: TextRepr,
    pub answer: TextRepr,
    pub label: Option<Polarity>,
    pub feats: Vec<SimilarityFeatures>,
}

/// Vectorized corpus ready for training and evaluation. Questions whose
/// product has no documents of the chosen source are excluded.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub products: Vec<PreparedProduct>,
    pub questions: Vec<PreparedQuestion>,
    /// Maps corpus question index to prepared question index.
    pub qa_to_prepared: Vec<Option<usize>>,
}

impl Prepared {
    pub fn build(
        corpus: &Corpus,
        vocab: &Vocabulary,
        stats: &CorpusStats,
        bm25: &Bm25Config,
        source: crate::corpus::DocSource,
    ) -> Prepared {
        let mut products = Vec::new();
        let mut slot_of: HashMap<String, usize> = HashMap::new();
        for product_id in corpus.product_ids(source) {
            let doc_indices: Vec<usize> = corpus.docs_for(product_id, source).to_vec();
            let reviews = doc_indices
                .iter()
                .map(|&i| TextRepr::from_tokens(corpus.docs()[i].tokens.clone(), vocab))
                .collect();
            slot_of.insert(product_id.to_string(), products.len());
            products.push(PreparedProduct {
                product_id: product_id.to_string(),
                doc_indices,
                reviews,
            });
        }

        let mut questions = Vec::new();
        let mut qa_to_prepared = vec![None; corpus.qa().len()];
        for (qa_index, record) in corpus.qa().iter().enumerate() {
            let Some(&product_slot) = slot_of.get(&record.product_id) else {
                continue;
            };
            let question = TextRepr::new(&record.question, vocab);
            let answer = TextRepr::new(&record.answer, vocab);
            let feats = products[product_slot]
                .reviews
                .iter()
                .map(|r| simfeat::features(&question, r, vocab, stats, bm25))
                .collect();
            qa_to_prepared[qa_index] = Some(questions.len());
            questions.push(PreparedQuestion {
                qa_index,
                product_slot,
                question,
                answer,
                label: record.binary_label,
                feats,
            });
        }
        Prepared {
            products,
            questions,
            qa_to_prepared,
        }
    }

    /// Prepared question indices for a split, in split order.
    pub fn split_questions(&self, corpus: &Corpus, split: Split) -> Vec<usize> {
        corpus
            .split_indices(split)
            .iter()
            .filter_map(|&qa| self.qa_to_prepared[qa])
            .collect()
    }
}

/// Per-review projections of one product through the current factors,
/// recomputed once per objective evaluation.
struct ProductProjections {
    proj_b: Vec<Vec<f64>>,
    proj_y: Vec<Vec<f64>>,
}

fn project_products(
    prepared: &Prepared,
    slots: &[usize],
    rel: &RelevanceParams,
    vote: &VoteParams,
) -> HashMap<usize, ProductProjections> {
    let mut out = HashMap::with_capacity(slots.len());
    for &slot in slots {
        let product = &prepared.products[slot];
        out.insert(
            slot,
            ProductProjections {
                proj_b: product.reviews.iter().map(|r| rel.b.project(&r.unit)).collect(),
                proj_y: product.reviews.iter().map(|r| vote.y.project(&r.unit)).collect(),
            },
        );
    }
    out
}

fn used_slots(prepared: &Prepared, instances: &[usize]) -> Vec<usize> {
    let mut slots: Vec<usize> = instances
        .iter()
        .map(|&i| prepared.questions[i].product_slot)
        .collect();
    slots.sort_unstable();
    slots.dedup();
    slots
}

/// Relevance log-probabilities and gradient scaffolding for one question.
struct RelevancePass {
    log_probs: Vec<f64>,
    proj_a_q: Vec<f64>,
}

fn relevance_pass(
    q: &PreparedQuestion,
    reviews: &[TextRepr],
    proj: &ProductProjections,
    rel: &RelevanceParams,
) -> RelevancePass {
    let proj_a_q = rel.a.project(&q.question.unit);
    let scores: Vec<f64> = reviews
        .iter()
        .enumerate()
        .map(|(j, r)| {
            dot(&rel.theta, &q.feats[j].as_array())
                + q.question.unit.weighted_dot(&r.unit, &rel.vartheta)
                + dot(&proj_a_q, &proj.proj_b[j])
        })
        .collect();
    let lse = log_sum_exp(&scores);
    let log_probs = scores.iter().map(|&s| s - lse).collect();
    RelevancePass {
        log_probs,
        proj_a_q,
    }
}

/// Scatter one question's relevance-score gradients into the flat gradient.
/// `gs[j]` is dloss/dscore_j.
fn accumulate_relevance_grads(
    grad: &mut [f64],
    layout: &ParamLayout,
    q: &PreparedQuestion,
    reviews: &[TextRepr],
    proj: &ProductProjections,
    pass: &RelevancePass,
    gs: &[f64],
) {
    let k = layout.k;
    for (j, r) in reviews.iter().enumerate() {
        let g = gs[j];
        if g == 0.0 {
            continue;
        }
        let feats = q.feats[j].as_array();
        for t in 0..NUM_SIM_FEATURES {
            grad[layout.theta() + t] += g * feats[t];
        }
        q.question.unit.for_shared(&r.unit, |f, wq, wr| {
            grad[layout.rel_diag() + f as usize] += g * wq * wr;
        });
        for &(f, w) in q.question.unit.entries() {
            let base = layout.rel_a() + f as usize * k;
            for (kk, pb) in proj.proj_b[j].iter().enumerate() {
                grad[base + kk] += g * w * pb;
            }
        }
        for &(f, w) in r.unit.entries() {
            let base = layout.rel_b() + f as usize * k;
            for (kk, pa) in pass.proj_a_q.iter().enumerate() {
                grad[base + kk] += g * w * pa;
            }
        }
    }
}

fn add_l2(x: &[f64], grad: &mut [f64], l2: f64) -> f64 {
    let mut penalty = 0.0;
    for (g, &xi) in grad.iter_mut().zip(x) {
        penalty += xi * xi;
        *g += l2 * xi;
    }
    0.5 * l2 * penalty
}

fn apply_mask(grad: &mut [f64], mask: &[bool]) {
    for (g, &active) in grad.iter_mut().zip(mask) {
        if !active {
            *g = 0.0;
        }
    }
}

/// Negative log-likelihood of labeled yes/no questions.
pub struct BinaryObjective<'a> {
    prepared: &'a Prepared,
    instances: Vec<usize>,
    layout: ParamLayout,
    l2: f64,
    mask: Vec<bool>,
    slots: Vec<usize>,
}

impl<'a> BinaryObjective<'a> {
    /// `instances` are prepared-question indices; each must carry a label.
    pub fn new(
        prepared: &'a Prepared,
        instances: Vec<usize>,
        layout: ParamLayout,
        l2: f64,
        mask: Vec<bool>,
    ) -> Result<BinaryObjective<'a>> {
        if instances.is_empty() {
            return Err(MoqaError::NoTrainableData(
                "no labeled questions in the training split".into(),
            ));
        }
        if instances
            .iter()
            .any(|&i| prepared.questions[i].label.is_none())
        {
            return Err(MoqaError::NoTrainableData(
                "binary training requires labels on every instance".into(),
            ));
        }
        let slots = used_slots(prepared, &instances);
        Ok(BinaryObjective {
            prepared,
            instances,
            layout,
            l2,
            mask,
            slots,
        })
    }

    pub fn num_instances(&self) -> usize {
        self.instances.len()
    }

    pub fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (rel, vote) = self.layout.unpack(x);
        let projections = project_products(self.prepared, &self.slots, &rel, &vote);
        let mut loss = 0.0;

        for &qi in &self.instances {
            let q = &self.prepared.questions[qi];
            let reviews = &self.prepared.products[q.product_slot].reviews;
            let proj = &projections[&q.product_slot];
            let pass = relevance_pass(q, reviews, proj, &rel);

            let proj_x_q = vote.x.project(&q.question.unit);
            let votes: Vec<f64> = reviews
                .iter()
                .enumerate()
                .map(|(j, r)| {
                    q.question.unit.weighted_dot(&r.unit, &vote.vartheta)
                        + dot(&proj_x_q, &proj.proj_y[j])
                })
                .collect();

            // Log-space mixture of vote sigmoids keeps extreme votes finite.
            let yes = q.label == Some(Polarity::Yes);
            let log_terms: Vec<f64> = pass
                .log_probs
                .iter()
                .zip(&votes)
                .map(|(&lp, &v)| lp + log_sigmoid(if yes { v } else { -v }))
                .collect();
            let log_p = log_sum_exp(&log_terms);
            loss -= log_p;

            let n = reviews.len();
            let mut gs = vec![0.0; n];
            let mut gv = vec![0.0; n];
            for j in 0..n {
                let p_j = pass.log_probs[j].exp();
                let w_j = (log_terms[j] - log_p).exp();
                gs[j] = p_j - w_j;
                gv[j] = if yes {
                    -w_j * sigmoid(-votes[j])
                } else {
                    w_j * sigmoid(votes[j])
                };
            }

            accumulate_relevance_grads(grad, &self.layout, q, reviews, proj, &pass, &gs);
            let k = self.layout.k;
            for (j, r) in reviews.iter().enumerate() {
                let g = gv[j];
                if g == 0.0 {
                    continue;
                }
                q.question.unit.for_shared(&r.unit, |f, wq, wr| {
                    grad[self.layout.vote_diag() + f as usize] += g * wq * wr;
                });
                for &(f, w) in q.question.unit.entries() {
                    let base = self.layout.vote_x() + f as usize * k;
                    for (kk, py) in proj.proj_y[j].iter().enumerate() {
                        grad[base + kk] += g * w * py;
                    }
                }
                for &(f, w) in r.unit.entries() {
                    let base = self.layout.vote_y() + f as usize * k;
                    for (kk, px) in proj_x_q.iter().enumerate() {
                        grad[base + kk] += g * w * px;
                    }
                }
            }
        }

        loss += add_l2(x, grad, self.l2);
        apply_mask(grad, &self.mask);
        loss
    }
}

/// Sample `n` non-answer question indices (with replacement) from `pool`,
/// excluding `own`. Deterministic for a fixed seed.
pub fn sample_non_answers(own: usize, pool: &[usize], n: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_non_answers_rng(own, pool, n, &mut rng)
}

/// As [`sample_non_answers`] but drawing from a caller-owned RNG.
pub fn sample_non_answers_rng(
    own: usize,
    pool: &[usize],
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    if !pool.iter().any(|&p| p != own) {
        return Err(MoqaError::PoolTooSmall);
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let pick = pool[rng.gen_range(0..pool.len())];
        if pick != own {
            out.push(pick);
        }
    }
    Ok(out)
}

/// Pairwise logistic loss preferring each question's answer over sampled
/// non-answers.
pub struct PairwiseObjective<'a> {
    prepared: &'a Prepared,
    instances: Vec<usize>,
    /// Per instance: prepared-question indices whose answers serve as
    /// negatives this round.
    negatives: Vec<Vec<usize>>,
    layout: ParamLayout,
    l2: f64,
    mask: Vec<bool>,
    slots: Vec<usize>,
    answer_slots: Vec<usize>,
}

impl<'a> PairwiseObjective<'a> {
    pub fn new(
        prepared: &'a Prepared,
        instances: Vec<usize>,
        layout: ParamLayout,
        l2: f64,
        mask: Vec<bool>,
    ) -> Result<PairwiseObjective<'a>> {
        if instances.is_empty() {
            return Err(MoqaError::NoTrainableData(
                "no questions in the training split".into(),
            ));
        }
        let slots = used_slots(prepared, &instances);
        Ok(PairwiseObjective {
            negatives: vec![Vec::new(); instances.len()],
            prepared,
            instances,
            layout,
            l2,
            mask,
            slots,
            answer_slots: Vec::new(),
        })
    }

    pub fn num_instances(&self) -> usize {
        self.instances.len()
    }

    /// Draw a fresh negative set for every instance. `pool` holds the
    /// prepared-question indices whose answers are candidates.
    pub fn resample_negatives(&mut self, pool: &[usize], n: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (slot, &qi) in self.instances.iter().enumerate() {
            self.negatives[slot] = sample_non_answers_rng(qi, pool, n, &mut rng)?;
        }
        let mut slots: Vec<usize> = self
            .instances
            .iter()
            .copied()
            .chain(self.negatives.iter().flatten().copied())
            .collect();
        slots.sort_unstable();
        slots.dedup();
        self.answer_slots = slots;
        Ok(())
    }

    pub fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (rel, vote) = self.layout.unpack(x);
        let projections = project_products(self.prepared, &self.slots, &rel, &vote);
        // Project every referenced answer through X once.
        let mut answer_proj: HashMap<usize, Vec<f64>> =
            HashMap::with_capacity(self.answer_slots.len());
        for &ai in &self.answer_slots {
            answer_proj.insert(
                ai,
                vote.x.project(&self.prepared.questions[ai].answer.unit),
            );
        }
        let mut loss = 0.0;
        let k = self.layout.k;

        for (slot, &qi) in self.instances.iter().enumerate() {
            let q = &self.prepared.questions[qi];
            let reviews = &self.prepared.products[q.product_slot].reviews;
            let n = reviews.len();
            let proj = &projections[&q.product_slot];
            let pass = relevance_pass(q, reviews, proj, &rel);

            let own_proj_x = &answer_proj[&qi];
            let own_votes: Vec<f64> = reviews
                .iter()
                .enumerate()
                .map(|(j, r)| {
                    q.answer.unit.weighted_dot(&r.unit, &vote.vartheta)
                        + dot(own_proj_x, &proj.proj_y[j])
                })
                .collect();

            let mut gs_total = vec![0.0; n];
            for &ni in &self.negatives[slot] {
                let neg = &self.prepared.questions[ni];
                let neg_proj_x = &answer_proj[&ni];
                let diffs: Vec<f64> = reviews
                    .iter()
                    .enumerate()
                    .map(|(j, r)| {
                        let neg_vote = neg.answer.unit.weighted_dot(&r.unit, &vote.vartheta)
                            + dot(neg_proj_x, &proj.proj_y[j]);
                        own_votes[j] - neg_vote
                    })
                    .collect();
                let log_terms: Vec<f64> = pass
                    .log_probs
                    .iter()
                    .zip(&diffs)
                    .map(|(&lp, &d)| lp + log_sigmoid(d))
                    .collect();
                let log_p = log_sum_exp(&log_terms);
                loss -= log_p;

                for j in 0..n {
                    let p_j = pass.log_probs[j].exp();
                    let w_j = (log_terms[j] - log_p).exp();
                    gs_total[j] += p_j - w_j;
                    let gd = -w_j * sigmoid(-diffs[j]);
                    if gd == 0.0 {
                        continue;
                    }
                    let r = &reviews[j];
                    q.answer.unit.for_shared(&r.unit, |f, wa, wr| {
                        grad[self.layout.vote_diag() + f as usize] += gd * wa * wr;
                    });
                    neg.answer.unit.for_shared(&r.unit, |f, wa, wr| {
                        grad[self.layout.vote_diag() + f as usize] -= gd * wa * wr;
                    });
                    for &(f, w) in q.answer.unit.entries() {
                        let base = self.layout.vote_x() + f as usize * k;
                        for (kk, py) in proj.proj_y[j].iter().enumerate() {
                            grad[base + kk] += gd * w * py;
                        }
                    }
                    for &(f, w) in neg.answer.unit.entries() {
                        let base = self.layout.vote_x() + f as usize * k;
                        for (kk, py) in proj.proj_y[j].iter().enumerate() {
                            grad[base + kk] -= gd * w * py;
                        }
                    }
                    for &(f, w) in r.unit.entries() {
                        let base = self.layout.vote_y() + f as usize * k;
                        for kk in 0..k {
                            grad[base + kk] += gd * w * (own_proj_x[kk] - neg_proj_x[kk]);
                        }
                    }
                }
            }
            accumulate_relevance_grads(grad, &self.layout, q, reviews, proj, &pass, &gs_total);
        }

        loss += add_l2(x, grad, self.l2);
        apply_mask(grad, &self.mask);
        loss
    }
}

/// One accepted optimizer iteration during training.
#[derive(Debug, Clone, Copy)]
pub struct TrainTraceRow {
    pub round: usize,
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
}

/// Summary of one training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub trace: Vec<TrainTraceRow>,
    pub final_loss: f64,
    pub final_grad_norm: f64,
    pub rounds: usize,
    pub instances: usize,
    pub wall_seconds: f64,
    pub param_norms: Vec<(String, f64)>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Seed for one sampling round, derived from the model seed.
pub fn round_seed(seed: u64, round: usize) -> u64 {
    splitmix64(seed ^ splitmix64(round as u64 + 1))
}

/// Train a full model on the corpus train split.
pub fn train(
    corpus: &Corpus,
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    bm25: &Bm25Config,
) -> Result<(TrainedModel, TrainReport)> {
    train_frozen(corpus, cfg, tcfg, bm25, &FreezeSpec::full())
}

/// Train with some parameter blocks frozen at zero (for reduced baselines).
pub fn train_frozen(
    corpus: &Corpus,
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    bm25: &Bm25Config,
    freeze: &FreezeSpec,
) -> Result<(TrainedModel, TrainReport)> {
    let start = Instant::now();
    let vocab = Vocabulary::build(corpus, cfg.f, cfg.source)?;
    let stats = CorpusStats::compute(corpus, &vocab, cfg.source)?;
    let prepared = Prepared::build(corpus, &vocab, &stats, bm25, cfg.source);
    let train_questions = prepared.split_questions(corpus, Split::Train);

    let layout = ParamLayout::new(vocab.size(), cfg.k);
    let mask = freeze.mask(&layout);
    let mut x = init_params(&layout, cfg.seed, &mask);
    let lbfgs = LbfgsConfig {
        history: tcfg.lbfgs_history,
        max_iters: tcfg.max_iters,
        grad_tol: tcfg.grad_tol,
        ..LbfgsConfig::default()
    };

    let mut trace = Vec::new();
    let mut final_loss = f64::NAN;
    let mut final_grad_norm = f64::NAN;
    let rounds;
    let instances;

    match cfg.mode {
        Mode::Binary => {
            let labeled: Vec<usize> = train_questions
                .iter()
                .copied()
                .filter(|&i| prepared.questions[i].label.is_some())
                .collect();
            let objective = BinaryObjective::new(&prepared, labeled, layout, cfg.l2, mask)?;
            instances = objective.num_instances();
            rounds = 1;
            let out = minimize(|p, g| objective.eval(p, g), x, &lbfgs)?;
            trace.extend(out.trace.iter().map(|r| TrainTraceRow {
                round: 0,
                iter: r.iter,
                loss: r.loss,
                grad_norm: r.grad_norm,
            }));
            final_loss = out.loss;
            final_grad_norm = out.grad_norm;
            x = out.x;
        }
        Mode::Open => {
            let pool = train_questions.clone();
            let mut objective =
                PairwiseObjective::new(&prepared, train_questions, layout, cfg.l2, mask)?;
            instances = objective.num_instances();
            rounds = tcfg.epochs;
            for round in 0..tcfg.epochs {
                objective.resample_negatives(
                    &pool,
                    tcfg.negatives_per_query,
                    round_seed(cfg.seed, round),
                )?;
                let out = minimize(|p, g| objective.eval(p, g), x, &lbfgs)?;
                trace.extend(out.trace.iter().map(|r| TrainTraceRow {
                    round,
                    iter: r.iter,
                    loss: r.loss,
                    grad_norm: r.grad_norm,
                }));
                final_loss = out.loss;
                final_grad_norm = out.grad_norm;
                x = out.x;
                log::info!(
                    "round {round}: loss {final_loss:.6}, grad norm {final_grad_norm:.3e}, {} iters",
                    out.iterations
                );
            }
        }
    }

    let (relevance, votes) = layout.unpack(&x);
    let param_norms = vec![
        ("theta".to_string(), crate::numerics::norm2(&relevance.theta)),
        (
            "relevance_diag".to_string(),
            crate::numerics::norm2(&relevance.vartheta),
        ),
        (
            "relevance_factors".to_string(),
            (crate::numerics::dot(relevance.a.data(), relevance.a.data())
                + crate::numerics::dot(relevance.b.data(), relevance.b.data()))
            .sqrt(),
        ),
        (
            "vote_diag".to_string(),
            crate::numerics::norm2(&votes.vartheta),
        ),
        (
            "vote_factors".to_string(),
            (crate::numerics::dot(votes.x.data(), votes.x.data())
                + crate::numerics::dot(votes.y.data(), votes.y.data()))
            .sqrt(),
        ),
    ];
    let model = TrainedModel {
        format_version: FORMAT_VERSION,
        config: *cfg,
        bm25: *bm25,
        vocab,
        stats,
        relevance,
        votes,
    };
    model.validate()?;
    let report = TrainReport {
        trace,
        final_loss,
        final_grad_norm,
        rounds,
        instances,
        wall_seconds: start.elapsed().as_secs_f64(),
        param_norms,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DocSource, QaRecord, ReviewDoc};
    use crate::textproc::tokenize;

    fn demo_corpus() -> Corpus {
        let reviews = [
            ("p1", "alpha beta gamma"),
            ("p1", "beta delta"),
            ("p1", "gamma epsilon zeta"),
            ("p2", "eta theta"),
            ("p2", "theta iota kappa"),
        ];
        let docs = reviews
            .iter()
            .map(|(p, t)| ReviewDoc {
                product_id: p.to_string(),
                text: t.to_string(),
                tokens: tokenize(t),
                source: DocSource::Review,
            })
            .collect();
        let qa = vec![
            QaRecord {
                product_id: "p1".into(),
                question: "alpha beta".into(),
                answer: "gamma delta".into(),
                binary_label: Some(Polarity::Yes),
            },
            QaRecord {
                product_id: "p1".into(),
                question: "delta epsilon".into(),
                answer: "zeta".into(),
                binary_label: Some(Polarity::No),
            },
            QaRecord {
                product_id: "p2".into(),
                question: "theta".into(),
                answer: "iota eta".into(),
                binary_label: Some(Polarity::Yes),
            },
            QaRecord {
                product_id: "p2".into(),
                question: "kappa iota".into(),
                answer: "theta".into(),
                binary_label: Some(Polarity::No),
            },
        ];
        Corpus::from_parts(docs, qa)
    }

    fn setup() -> (Corpus, Vocabulary, CorpusStats, Prepared) {
        let corpus = demo_corpus();
        let vocab = Vocabulary::build(&corpus, 50, DocSource::Review).unwrap();
        let stats = CorpusStats::compute(&corpus, &vocab, DocSource::Review).unwrap();
        let prepared = Prepared::build(
            &corpus,
            &vocab,
            &stats,
            &Bm25Config::default(),
            DocSource::Review,
        );
        (corpus, vocab, stats, prepared)
    }

    #[test]
    fn layout_offsets_tile_the_vector() {
        let layout = ParamLayout::new(7, 3);
        assert_eq!(layout.total(), 3 + 2 * 7 + 4 * 7 * 3);
        assert_eq!(layout.rel_diag(), 3);
        assert_eq!(layout.rel_a(), 10);
        assert_eq!(layout.rel_b(), 31);
        assert_eq!(layout.vote_diag(), 52);
        assert_eq!(layout.vote_x(), 59);
        assert_eq!(layout.vote_y(), 80);
        assert_eq!(layout.vote_y() + 21, layout.total());
    }

    #[test]
    fn pack_unpack_round_trips() {
        let layout = ParamLayout::new(4, 2);
        let mask = vec![true; layout.total()];
        let x = init_params(&layout, 9, &mask);
        let (rel, vote) = layout.unpack(&x);
        assert_eq!(layout.pack(&rel, &vote), x);
    }

    #[test]
    fn init_is_deterministic_and_respects_mask() {
        let layout = ParamLayout::new(4, 2);
        let full = FreezeSpec::full().mask(&layout);
        let a = init_params(&layout, 3, &full);
        let b = init_params(&layout, 3, &full);
        assert_eq!(a, b);
        assert!(a[layout.rel_a()..].iter().any(|&v| v != 0.0));
        assert!(a[..layout.rel_a()].iter().all(|&v| v == 0.0));

        let frozen = FreezeSpec {
            low_rank_active: false,
            ..FreezeSpec::full()
        }
        .mask(&layout);
        let c = init_params(&layout, 3, &frozen);
        assert!(c[layout.rel_a()..layout.vote_diag()].iter().all(|&v| v == 0.0));
        assert!(c[layout.vote_x()..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn freeze_mask_keeps_vote_diag_active() {
        let layout = ParamLayout::new(4, 2);
        let spec = FreezeSpec {
            theta_active: [false, true, false],
            rel_diag_active: false,
            low_rank_active: false,
        };
        let mask = spec.mask(&layout);
        assert!(!mask[0] && mask[1] && !mask[2]);
        assert!(!mask[layout.rel_diag()]);
        assert!(mask[layout.vote_diag()]);
    }

    #[test]
    fn sampling_excludes_own_and_is_deterministic() {
        let pool = vec![0, 1, 2, 3];
        let a = sample_non_answers(2, &pool, 20, 5).unwrap();
        let b = sample_non_answers(2, &pool, 20, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&i| i != 2));
        assert_eq!(a.len(), 20);
        assert!(matches!(
            sample_non_answers(0, &[0], 3, 1),
            Err(MoqaError::PoolTooSmall)
        ));
    }

    fn finite_difference_check(
        eval: impl Fn(&[f64], &mut [f64]) -> f64,
        x: &[f64],
        h: f64,
        tol: f64,
    ) {
        let n = x.len();
        let mut grad = vec![0.0; n];
        eval(x, &mut grad);
        let mut scratch = vec![0.0; n];
        let mut xp = x.to_vec();
        for i in 0..n {
            xp[i] = x[i] + h;
            let up = eval(&xp, &mut scratch);
            xp[i] = x[i] - h;
            let down = eval(&xp, &mut scratch);
            xp[i] = x[i];
            let fd = (up - down) / (2.0 * h);
            let denom = (grad[i].abs() + fd.abs()).max(1e-3);
            let rel = (grad[i] - fd).abs() / denom;
            assert!(
                rel < tol,
                "coordinate {i}: analytic {} vs fd {fd}, rel {rel}",
                grad[i]
            );
        }
    }

    #[test]
    fn binary_gradient_matches_finite_differences() {
        let (_corpus, vocab, _stats, prepared) = setup();
        let layout = ParamLayout::new(vocab.size(), 2);
        let mask = vec![true; layout.total()];
        let objective =
            BinaryObjective::new(&prepared, vec![0, 1, 2, 3], layout, 1e-3, mask.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = Normal::new(0.0, 0.1).unwrap();
        let x: Vec<f64> = (0..layout.total()).map(|_| normal.sample(&mut rng)).collect();
        finite_difference_check(|p, g| objective.eval(p, g), &x, 1e-5, 1e-4);
    }

    #[test]
    fn pairwise_gradient_matches_finite_differences() {
        let (_corpus, vocab, _stats, prepared) = setup();
        let layout = ParamLayout::new(vocab.size(), 2);
        let mask = vec![true; layout.total()];
        let mut objective =
            PairwiseObjective::new(&prepared, vec![0, 1, 2, 3], layout, 1e-3, mask).unwrap();
        objective.resample_negatives(&[0, 1, 2, 3], 3, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let normal = Normal::new(0.0, 0.1).unwrap();
        let x: Vec<f64> = (0..layout.total()).map(|_| normal.sample(&mut rng)).collect();
        finite_difference_check(|p, g| objective.eval(p, g), &x, 1e-5, 1e-4);
    }

    #[test]
    fn masked_gradients_are_zero() {
        let (_corpus, vocab, _stats, prepared) = setup();
        let layout = ParamLayout::new(vocab.size(), 2);
        let spec = FreezeSpec {
            theta_active: [true, true, true],
            rel_diag_active: true,
            low_rank_active: false,
        };
        let mask = spec.mask(&layout);
        let objective =
            BinaryObjective::new(&prepared, vec![0, 1], layout, 1e-3, mask.clone()).unwrap();
        let x = init_params(&layout, 1, &mask);
        let mut grad = vec![0.0; layout.total()];
        objective.eval(&x, &mut grad);
        for (i, (&g, &active)) in grad.iter().zip(&mask).enumerate() {
            if !active {
                assert_eq!(g, 0.0, "frozen coordinate {i} has gradient");
            }
        }
    }

    #[test]
    fn binary_training_reduces_loss_and_is_deterministic() {
        let corpus = demo_corpus();
        let cfg = ModelConfig {
            k: 2,
            f: 50,
            l2: 1e-3,
            seed: 4,
            mode: Mode::Binary,
            source: DocSource::Review,
        };
        let tcfg = TrainConfig {
            max_iters: 60,
            ..TrainConfig::default()
        };
        let bm25 = Bm25Config::default();
        let (model_a, report_a) = train(&corpus, &cfg, &tcfg, &bm25).unwrap();
        let (model_b, _) = train(&corpus, &cfg, &tcfg, &bm25).unwrap();
        assert_eq!(model_a, model_b);
        let first = report_a.trace.first().unwrap().loss;
        assert!(report_a.final_loss < first);
    }

    #[test]
    fn open_training_runs_rounds_and_reduces_loss() {
        let corpus = demo_corpus();
        let cfg = ModelConfig {
            k: 2,
            f: 50,
            l2: 1e-3,
            seed: 4,
            mode: Mode::Open,
            source: DocSource::Review,
        };
        let tcfg = TrainConfig {
            epochs: 2,
            negatives_per_query: 2,
            max_iters: 40,
            ..TrainConfig::default()
        };
        let (model, report) = train(&corpus, &cfg, &tcfg, &Bm25Config::default()).unwrap();
        assert_eq!(report.rounds, 2);
        assert!(report.trace.iter().any(|r| r.round == 1));
        let first = report.trace.first().unwrap().loss;
        assert!(report.final_loss < first);
        model.validate().unwrap();
    }

    #[test]
    fn binary_training_requires_labels() {
        let mut corpus = demo_corpus();
        for i in 0..corpus.qa().len() {
            corpus.set_label(i, None);
        }
        let cfg = ModelConfig {
            k: 2,
            f: 50,
            l2: 1e-3,
            seed: 0,
            mode: Mode::Binary,
            source: DocSource::Review,
        };
        let out = train(&corpus, &cfg, &TrainConfig::default(), &Bm25Config::default());
        assert!(matches!(out, Err(MoqaError::NoTrainableData(_))));
    }
}
