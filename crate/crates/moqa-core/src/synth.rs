//! Synthetic corpus generator with planted low-rank structure and a known
//! scoring oracle.
//!
//! Words live in disjoint blocks (question, review, answer, noise) and each
//! content word carries a hidden unit vector in a low-dimensional latent
//! space. Reviews and questions are written about latent topics by sampling
//! words whose vectors align with the topic. Each question's true answer is
//! written about the realized topic of its best-matching review, so a model
//! must recover the hidden word geometry to rank answers well. Binary labels
//! follow the sign of a hidden vote direction applied to that topic, with
//! optional noise concentrated at small margins.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{Corpus, DocSource, Polarity, QaRecord, ReviewDoc, Splits};
use crate::error::{MoqaError, Result};
use crate::model::{
    Factor, Mode, ModelConfig, RelevanceParams, TrainedModel, VoteParams, FORMAT_VERSION,
};
use crate::simfeat::Bm25Config;
use crate::textproc::{tokenize, CorpusStats, Vocabulary};

/// Leading verbs used for binary synthetic questions.
const SYNTH_VERBS: [&str; 5] = ["is", "does", "can", "will", "would"];

/// Generator settings.
#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub products: usize,
    pub reviews_per_product: usize,
    pub train_questions: usize,
    pub valid_questions: usize,
    pub test_questions: usize,
    /// Distinct terms across all blocks (including reserved verb tokens).
    pub vocab_size: usize,
    /// Hidden latent dimension.
    pub rank: usize,
    pub mode: Mode,
    pub seed: u64,
    /// Content words per question, review, and answer.
    pub question_terms: usize,
    pub review_terms: usize,
    pub answer_terms: usize,
    /// Off-topic filler words appended to each text.
    pub noise_terms: usize,
    /// Word-choice softmax temperature; lower is more on-topic.
    pub temperature: f64,
    /// Stddev of Gaussian noise added to the label margin (binary mode);
    /// flips concentrate on borderline questions.
    pub label_margin_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> SynthConfig {
        SynthConfig {
            products: 50,
            reviews_per_product: 5,
            train_questions: 800,
            valid_questions: 0,
            test_questions: 200,
            vocab_size: 300,
            rank: 3,
            mode: Mode::Open,
            seed: 0,
            question_terms: 8,
            review_terms: 10,
            answer_terms: 8,
            noise_terms: 1,
            temperature: 0.2,
            label_margin_noise: 0.25,
        }
    }
}

/// Ground truth for one generated question.
#[derive(Debug, Clone)]
pub struct PlantedQuestion {
    pub qa_index: usize,
    /// Corpus doc index of the review the answer was written about.
    pub doc_index: usize,
    /// Clean label margin before noise (binary mode; 0.0 in open mode).
    pub margin: f64,
}

/// The generator's hidden state: per-word latent vectors keyed by term, the
/// binary vote direction, and the planted review for every question.
#[derive(Debug, Clone)]
pub struct SyntheticTruth {
    pub rank: usize,
    pub relevance_scale: f64,
    pub vote_scale: f64,
    pub q_latents: Vec<(String, Vec<f64>)>,
    pub r_latents: Vec<(String, Vec<f64>)>,
    pub a_latents: Vec<(String, Vec<f64>)>,
    pub vote_direction: Vec<f64>,
    pub planted: Vec<PlantedQuestion>,
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        let norm = crate::numerics::norm2(&v);
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn block_latents(
    rng: &mut ChaCha8Rng,
    prefix: &str,
    count: usize,
    dim: usize,
) -> Vec<(String, Vec<f64>)> {
    (0..count)
        .map(|i| (format!("{prefix}{i:03}"), unit_vector(rng, dim)))
        .collect()
}

/// The `count` words whose latents best align with the topic, in alignment
/// order. Answers use this: every answer is the best possible realization of
/// its topic, so under the hidden maps the true answer scores at least as
/// high as any other same-length answer, with equality only for identical
/// word sets.
fn top_topic_words(
    latents: &[(String, Vec<f64>)],
    topic: &[f64],
    count: usize,
) -> Vec<String> {
    let mut order: Vec<usize> = (0..latents.len()).collect();
    order.sort_by(|&a, &b| {
        let sa = crate::numerics::dot(&latents[a].1, topic);
        let sb = crate::numerics::dot(&latents[b].1, topic);
        sb.partial_cmp(&sa).unwrap().then(a.cmp(&b))
    });
    order[..count.min(latents.len())]
        .iter()
        .map(|&i| latents[i].0.clone())
        .collect()
}

/// Sample `count` distinct words, weighting by alignment of each word's
/// latent with the topic through a softmax at the given temperature.
fn sample_topic_words(
    rng: &mut ChaCha8Rng,
    latents: &[(String, Vec<f64>)],
    topic: &[f64],
    count: usize,
    temperature: f64,
) -> Vec<String> {
    let mut weights: Vec<f64> = latents
        .iter()
        .map(|(_, v)| (crate::numerics::dot(v, topic) / temperature).exp())
        .collect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count.min(latents.len()) {
        let total: f64 = weights.iter().sum();
        let mut draw = rng.gen::<f64>() * total;
        let mut pick = weights.len() - 1;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                draw -= w;
                if draw <= 0.0 {
                    pick = i;
                    break;
                }
            }
        }
        out.push(latents[pick].0.clone());
        weights[pick] = 0.0;
    }
    out
}

/// Unit-scaled hidden projection of a token list: sum of count/norm-weighted
/// latents over tokens that carry one.
fn hidden_projection(
    tokens: &[String],
    latents: &HashMap<&str, &[f64]>,
    rank: usize,
) -> Vec<f64> {
    let mut counts: HashMap<&str, f64> = HashMap::new();
    for t in tokens {
        *counts.entry(t.as_str()).or_insert(0.0) += 1.0;
    }
    let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
    let mut out = vec![0.0; rank];
    if norm == 0.0 {
        return out;
    }
    for (term, count) in counts {
        if let Some(latent) = latents.get(term) {
            for (o, l) in out.iter_mut().zip(*latent) {
                *o += count / norm * l;
            }
        }
    }
    out
}

fn normalize_or_zero(mut v: Vec<f64>) -> Vec<f64> {
    let norm = crate::numerics::norm2(&v);
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

fn latent_map<'a>(latents: &'a [(String, Vec<f64>)]) -> HashMap<&'a str, &'a [f64]> {
    latents
        .iter()
        .map(|(t, v)| (t.as_str(), v.as_slice()))
        .collect()
}

/// Generate a corpus with splits assigned, plus the hidden truth.
pub fn generate(cfg: &SynthConfig) -> Result<(Corpus, SyntheticTruth)> {
    let block = 3 * cfg.vocab_size / 10;
    let reserved = 8;
    if cfg.vocab_size < 40 || 3 * block + reserved > cfg.vocab_size {
        return Err(MoqaError::InvalidInput(format!(
            "synthetic vocabulary size {} too small",
            cfg.vocab_size
        )));
    }
    let noise_block = cfg.vocab_size - 3 * block - reserved;
    let max_terms = cfg
        .question_terms
        .max(cfg.review_terms)
        .max(cfg.answer_terms);
    if max_terms > block {
        return Err(MoqaError::InvalidInput(format!(
            "terms per text {max_terms} exceeds block size {block}"
        )));
    }
    if cfg.products == 0 || cfg.reviews_per_product == 0 {
        return Err(MoqaError::InvalidInput(
            "need at least one product and one review".into(),
        ));
    }
    let n_questions = cfg.train_questions + cfg.valid_questions + cfg.test_questions;
    if n_questions == 0 {
        return Err(MoqaError::TooFewQuestions { n: 0 });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let q_latents = block_latents(&mut rng, "qw", block, cfg.rank);
    let r_latents = block_latents(&mut rng, "rw", block, cfg.rank);
    let a_latents = block_latents(&mut rng, "aw", block, cfg.rank);
    let noise_words: Vec<String> = (0..noise_block).map(|i| format!("nw{i:03}")).collect();
    let vote_direction = unit_vector(&mut rng, cfg.rank);

    let q_map = latent_map(&q_latents);
    let r_map = latent_map(&r_latents);

    // Reviews: one single-sentence doc per review, each about its own topic.
    let mut docs = Vec::with_capacity(cfg.products * cfg.reviews_per_product);
    let mut review_tokens: Vec<Vec<Vec<String>>> = Vec::with_capacity(cfg.products);
    for p in 0..cfg.products {
        let product_id = format!("p{p:04}");
        let mut per_product = Vec::with_capacity(cfg.reviews_per_product);
        for _ in 0..cfg.reviews_per_product {
            let topic = unit_vector(&mut rng, cfg.rank);
            let mut words =
                sample_topic_words(&mut rng, &r_latents, &topic, cfg.review_terms, cfg.temperature);
            for _ in 0..cfg.noise_terms {
                if !noise_words.is_empty() {
                    words.push(noise_words[rng.gen_range(0..noise_words.len())].clone());
                }
            }
            let text = format!("{}.", words.join(" "));
            docs.push(ReviewDoc {
                product_id: product_id.clone(),
                tokens: tokenize(&text),
                text,
                source: DocSource::Review,
            });
            per_product.push(words);
        }
        review_tokens.push(per_product);
    }

    // Questions: a topic, a product, the best-matching review under the
    // hidden geometry, and an answer written about that review's realized
    // topic.
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut qa = Vec::with_capacity(n_questions);
    let mut planted = Vec::with_capacity(n_questions);
    for qa_index in 0..n_questions {
        let topic = unit_vector(&mut rng, cfg.rank);
        let product = rng.gen_range(0..cfg.products);
        let product_id = format!("p{product:04}");
        let mut q_words =
            sample_topic_words(&mut rng, &q_latents, &topic, cfg.question_terms, cfg.temperature);
        for _ in 0..cfg.noise_terms {
            if !noise_words.is_empty() {
                q_words.push(noise_words[rng.gen_range(0..noise_words.len())].clone());
            }
        }
        if cfg.mode == Mode::Binary {
            let verb = SYNTH_VERBS[rng.gen_range(0..SYNTH_VERBS.len())];
            q_words.insert(0, verb.to_string());
        }
        let question = format!("{}?", q_words.join(" "));

        let q_proj = hidden_projection(&tokenize(&question), &q_map, cfg.rank);
        let (best_review, _) = review_tokens[product]
            .iter()
            .enumerate()
            .map(|(j, tokens)| {
                let r_proj = hidden_projection(tokens, &r_map, cfg.rank);
                (j, crate::numerics::dot(&q_proj, &r_proj))
            })
            .fold((0usize, f64::NEG_INFINITY), |acc, (j, s)| {
                if s > acc.1 {
                    (j, s)
                } else {
                    acc
                }
            });
        let doc_index = product * cfg.reviews_per_product + best_review;
        let realized_topic = normalize_or_zero(hidden_projection(
            &review_tokens[product][best_review],
            &r_map,
            cfg.rank,
        ));

        let mut a_words = top_topic_words(&a_latents, &realized_topic, cfg.answer_terms);
        for idx in rand::seq::index::sample(
            &mut rng,
            noise_words.len().max(1),
            cfg.noise_terms.min(noise_words.len()),
        ) {
            a_words.push(noise_words[idx].clone());
        }
        let (answer, binary_label, margin) = match cfg.mode {
            Mode::Open => (format!("{}.", a_words.join(" ")), None, 0.0),
            Mode::Binary => {
                let clean = crate::numerics::dot(&vote_direction, &realized_topic);
                let noisy = clean + cfg.label_margin_noise * normal.sample(&mut rng);
                let label = if noisy > 0.0 { Polarity::Yes } else { Polarity::No };
                a_words.insert(0, label.as_str().to_string());
                (format!("{}.", a_words.join(" ")), Some(label), clean)
            }
        };
        qa.push(QaRecord {
            product_id,
            question,
            answer,
            binary_label,
        });
        planted.push(PlantedQuestion {
            qa_index,
            doc_index,
            margin,
        });
    }

    let mut corpus = Corpus::from_parts(docs, qa);
    let train_end = cfg.train_questions;
    let valid_end = train_end + cfg.valid_questions;
    corpus.set_splits(Splits {
        train: (0..train_end).collect(),
        valid: (train_end..valid_end).collect(),
        test: (valid_end..n_questions).collect(),
    })?;

    let truth = SyntheticTruth {
        rank: cfg.rank,
        relevance_scale: 200.0,
        vote_scale: 10.0,
        q_latents,
        r_latents,
        a_latents,
        vote_direction,
        planted,
    };
    Ok((corpus, truth))
}

impl SyntheticTruth {
    /// Materialize the hidden geometry as a trained model over the corpus
    /// vocabulary: factor rows hold the word latents (scaled for sharp
    /// softmax and vote sigmoids), everything else is zero.
    pub fn oracle_model(&self, corpus: &Corpus, mode: Mode, f: usize) -> Result<TrainedModel> {
        let vocab = Vocabulary::build(corpus, f, DocSource::Review)?;
        let stats = CorpusStats::compute(corpus, &vocab, DocSource::Review)?;
        let fe = vocab.size();
        let k = self.rank;
        let mut rel = RelevanceParams::zeros(fe, k);
        let mut votes = VoteParams::zeros(fe, k);

        let fill = |factor: &mut Factor, latents: &[(String, Vec<f64>)], scale: f64| {
            for (term, latent) in latents {
                if let Some(i) = vocab.index_of(term) {
                    let row = factor.row_mut(i as usize);
                    for (r, l) in row.iter_mut().zip(latent) {
                        *r = scale * l;
                    }
                }
            }
        };
        fill(&mut rel.a, &self.q_latents, self.relevance_scale);
        fill(&mut rel.b, &self.r_latents, 1.0);
        match mode {
            Mode::Binary => {
                // Every question word votes along the hidden direction.
                let rows: Vec<(String, Vec<f64>)> = self
                    .q_latents
                    .iter()
                    .map(|(t, _)| (t.clone(), self.vote_direction.clone()))
                    .collect();
                fill(&mut votes.x, &rows, self.vote_scale);
            }
            Mode::Open => {
                fill(&mut votes.x, &self.a_latents, self.vote_scale);
            }
        }
        fill(&mut votes.y, &self.r_latents, 1.0);

        let model = TrainedModel {
            format_version: FORMAT_VERSION,
            config: ModelConfig {
                k,
                f,
                l2: 0.0,
                seed: 0,
                mode,
                source: DocSource::Review,
            },
            bm25: Bm25Config::default(),
            vocab,
            stats,
            relevance: rel,
            votes,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Control transform: permute answers among the train-split questions,
/// breaking the answer-review correspondence the model is supposed to learn.
/// Test questions keep their true answers.
pub fn shuffle_train_answers(corpus: &mut Corpus, seed: u64) {
    use rand::seq::SliceRandom;
    let train: Vec<usize> = corpus.splits().train.clone();
    let mut answers: Vec<String> = train.iter().map(|&i| corpus.qa()[i].answer.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    answers.shuffle(&mut rng);
    for (&i, answer) in train.iter().zip(answers) {
        corpus.set_answer(i, answer);
    }
}
