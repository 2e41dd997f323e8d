//! Heuristic yes/no question detection plus a learned answer-polarity
//! classifier that labels the most confident detections.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Polarity};
use crate::error::{MoqaError, Result};
use crate::numerics::{sigmoid, softplus};
use crate::optim::{minimize, LbfgsConfig};
use crate::textproc::{tokenize, BowVector, Vocabulary};

/// Leading verbs that mark a yes/no question.
pub const LEADING_VERBS: [&str; 20] = [
    "is", "are", "was", "were", "am", "do", "does", "did", "can", "could", "will", "would",
    "should", "shall", "may", "might", "must", "has", "have", "had",
];

/// Labeler settings.
#[derive(Debug, Clone)]
pub struct LabelerConfig {
    /// Fraction of detected questions to keep, by descending |score|.
    pub keep_fraction: f64,
    /// L2 strength for the polarity classifier.
    pub classifier_l2: f64,
}

impl Default for LabelerConfig {
    fn default() -> LabelerConfig {
        LabelerConfig {
            keep_fraction: 0.5,
            classifier_l2: 1e-2,
        }
    }
}

/// True when the question's first token is a leading verb.
pub fn detect_yesno_question(question: &str) -> bool {
    match tokenize(question).first() {
        Some(first) => LEADING_VERBS.contains(&first.as_str()),
        None => false,
    }
}

/// Features of one answer for polarity classification: vocabulary unigram
/// counts plus the first token, which gets its own weight block.
#[derive(Debug, Clone)]
pub struct PolarityFeatures {
    pub unigrams: BowVector,
    pub first_token: Option<String>,
}

pub fn polarity_features(answer: &str, vocab: &Vocabulary) -> PolarityFeatures {
    let tokens = tokenize(answer);
    PolarityFeatures {
        unigrams: BowVector::vectorize(&tokens, vocab),
        first_token: tokens.into_iter().next(),
    }
}

/// Logistic answer-polarity model. Positive scores mean "yes"; |score| is
/// the confidence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolarityModel {
    pub unigram_weights: Vec<f64>,
    /// First-word vocabulary, sorted, with one weight per entry.
    pub first_words: Vec<String>,
    pub first_word_weights: Vec<f64>,
    pub bias: f64,
}

impl PolarityModel {
    pub fn score(&self, feats: &PolarityFeatures) -> f64 {
        let mut z = self.bias;
        for &(i, w) in feats.unigrams.entries() {
            z += w * self.unigram_weights[i as usize];
        }
        if let Some(first) = &feats.first_token {
            if let Ok(pos) = self.first_words.binary_search(first) {
                z += self.first_word_weights[pos];
            }
        }
        z
    }

    pub fn classify(&self, feats: &PolarityFeatures) -> (Polarity, f64) {
        let z = self.score(feats);
        let label = if z >= 0.0 { Polarity::Yes } else { Polarity::No };
        (label, z.abs())
    }
}

/// Fit the polarity classifier on (answer text, polarity) pairs by
/// regularized logistic regression. Requires both classes. The convex
/// objective starts from zero, so the fit is deterministic.
pub fn train_polarity(
    examples: &[(String, Polarity)],
    vocab: &Vocabulary,
    cfg: &LabelerConfig,
) -> Result<PolarityModel> {
    let yes = examples.iter().filter(|(_, p)| *p == Polarity::Yes).count();
    let no = examples.len() - yes;
    if yes == 0 || no == 0 {
        return Err(MoqaError::SingleClass { yes, no });
    }

    let mut first_words: Vec<String> = examples
        .iter()
        .filter_map(|(a, _)| tokenize(a).into_iter().next())
        .collect();
    first_words.sort_unstable();
    first_words.dedup();

    let feats: Vec<(PolarityFeatures, f64)> = examples
        .iter()
        .map(|(a, p)| {
            let y = if *p == Polarity::Yes { 1.0 } else { -1.0 };
            (polarity_features(a, vocab), y)
        })
        .collect();

    let f = vocab.size();
    let fw = first_words.len();
    // Layout: [unigrams | first words | bias]; the bias is unregularized.
    let n = f + fw + 1;
    let l2 = cfg.classifier_l2;
    let first_pos = |token: &Option<String>| {
        token
            .as_ref()
            .and_then(|t| first_words.binary_search(t).ok())
    };
    let objective = |x: &[f64], grad: &mut [f64]| {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (pf, y) in &feats {
            let mut z = x[n - 1];
            for &(i, w) in pf.unigrams.entries() {
                z += w * x[i as usize];
            }
            if let Some(pos) = first_pos(&pf.first_token) {
                z += x[f + pos];
            }
            let margin = y * z;
            loss += softplus(-margin);
            let g = -y * sigmoid(-margin);
            for &(i, w) in pf.unigrams.entries() {
                grad[i as usize] += g * w;
            }
            if let Some(pos) = first_pos(&pf.first_token) {
                grad[f + pos] += g;
            }
            grad[n - 1] += g;
        }
        for i in 0..n - 1 {
            loss += 0.5 * l2 * x[i] * x[i];
            grad[i] += l2 * x[i];
        }
        loss
    };

    let out = minimize(objective, vec![0.0; n], &LbfgsConfig::default())?;
    let x = out.x;
    Ok(PolarityModel {
        unigram_weights: x[..f].to_vec(),
        first_word_weights: x[f..f + fw].to_vec(),
        first_words,
        bias: x[n - 1],
    })
}

/// Bootstrap polarity training pairs from a corpus: explicit labels win,
/// otherwise an answer whose first token is literally "yes" or "no" seeds
/// that class.
pub fn bootstrap_polarity_examples(corpus: &Corpus) -> Vec<(String, Polarity)> {
    corpus
        .qa()
        .iter()
        .filter_map(|record| {
            let polarity = record.binary_label.or_else(|| {
                tokenize(&record.answer)
                    .first()
                    .and_then(|t| Polarity::parse(t))
            })?;
            Some((record.answer.clone(), polarity))
        })
        .collect()
}

/// Outcome counters from a labeling pass.
#[derive(Debug, Clone, Copy, Default)]
pub struct LabelReport {
    pub detected: usize,
    pub labeled: usize,
    pub cleared: usize,
}

/// Label the corpus in place: detect yes/no questions by leading verb, score
/// answer polarity, and keep the top `keep_fraction` of detections by
/// confidence (ceil of the detected count; ties keep question order). All
/// other records end up unlabeled.
pub fn label_corpus(
    corpus: &mut Corpus,
    model: &PolarityModel,
    vocab: &Vocabulary,
    cfg: &LabelerConfig,
) -> Result<LabelReport> {
    if !(0.0..=1.0).contains(&cfg.keep_fraction) {
        return Err(MoqaError::InvalidInput(format!(
            "keep fraction must be in [0, 1], got {}",
            cfg.keep_fraction
        )));
    }
    let mut detected: Vec<(usize, Polarity, f64)> = Vec::new();
    for (i, record) in corpus.qa().iter().enumerate() {
        if !detect_yesno_question(&record.question) {
            continue;
        }
        let feats = polarity_features(&record.answer, vocab);
        let (label, confidence) = model.classify(&feats);
        detected.push((i, label, confidence));
    }

    let keep = (cfg.keep_fraction * detected.len() as f64).ceil() as usize;
    let mut order: Vec<usize> = (0..detected.len()).collect();
    order.sort_by(|&a, &b| {
        detected[b].2
            .partial_cmp(&detected[a].2)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(detected[a].0.cmp(&detected[b].0))
    });

    let mut report = LabelReport {
        detected: detected.len(),
        ..LabelReport::default()
    };
    let kept: std::collections::HashSet<usize> =
        order.iter().take(keep).map(|&pos| detected[pos].0).collect();
    let labels: std::collections::HashMap<usize, Polarity> =
        detected.iter().map(|&(i, l, _)| (i, l)).collect();
    for i in 0..corpus.qa().len() {
        if kept.contains(&i) {
            corpus.set_label(i, Some(labels[&i]));
            report.labeled += 1;
        } else {
            if corpus.qa()[i].binary_label.is_some() {
                report.cleared += 1;
            }
            corpus.set_label(i, None);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DocSource, QaRecord, ReviewDoc};

    #[test]
    fn detects_leading_verbs_only() {
        assert!(detect_yesno_question("Is it waterproof?"));
        assert!(detect_yesno_question("does this fit a king bed"));
        assert!(detect_yesno_question("Can I use it outside?"));
        assert!(!detect_yesno_question("How long is the cable?"));
        assert!(!detect_yesno_question("what size should I get"));
        assert!(!detect_yesno_question(""));
    }

    fn labeled_examples() -> Vec<(String, Polarity)> {
        let mut out = Vec::new();
        for i in 0..12 {
            out.push((format!("yes it works fine {i}"), Polarity::Yes));
            out.push((format!("no it broke quickly {i}"), Polarity::No));
        }
        out
    }

    fn vocab_from(examples: &[(String, Polarity)]) -> Vocabulary {
        let mut terms: Vec<String> = examples
            .iter()
            .flat_map(|(a, _)| tokenize(a))
            .collect();
        terms.sort_unstable();
        terms.dedup();
        Vocabulary::from_terms(terms).unwrap()
    }

    #[test]
    fn polarity_model_separates_clear_classes() {
        let examples = labeled_examples();
        let vocab = vocab_from(&examples);
        let model = train_polarity(&examples, &vocab, &LabelerConfig::default()).unwrap();
        let yes = polarity_features("yes definitely works", &vocab);
        let no = polarity_features("no it broke", &vocab);
        assert!(model.score(&yes) > 0.0);
        assert!(model.score(&no) < 0.0);
    }

    #[test]
    fn polarity_training_requires_both_classes() {
        let examples: Vec<(String, Polarity)> =
            (0..5).map(|i| (format!("yes {i}"), Polarity::Yes)).collect();
        let vocab = vocab_from(&examples);
        assert!(matches!(
            train_polarity(&examples, &vocab, &LabelerConfig::default()),
            Err(MoqaError::SingleClass { yes: 5, no: 0 })
        ));
    }

    #[test]
    fn polarity_training_is_deterministic() {
        let examples = labeled_examples();
        let vocab = vocab_from(&examples);
        let a = train_polarity(&examples, &vocab, &LabelerConfig::default()).unwrap();
        let b = train_polarity(&examples, &vocab, &LabelerConfig::default()).unwrap();
        assert_eq!(a.unigram_weights, b.unigram_weights);
        assert_eq!(a.first_word_weights, b.first_word_weights);
    }

    fn label_test_corpus() -> Corpus {
        let docs = vec![ReviewDoc {
            product_id: "p".into(),
            text: "works".into(),
            tokens: tokenize("works"),
            source: DocSource::Review,
        }];
        let qa = vec![
            QaRecord {
                product_id: "p".into(),
                question: "is it good".into(),
                answer: "yes very good".into(),
                binary_label: None,
            },
            QaRecord {
                product_id: "p".into(),
                question: "does it break".into(),
                answer: "no never broke".into(),
                binary_label: None,
            },
            QaRecord {
                product_id: "p".into(),
                question: "how big is it".into(),
                answer: "about two feet".into(),
                binary_label: None,
            },
            QaRecord {
                product_id: "p".into(),
                question: "will it last".into(),
                answer: "maybe a year".into(),
                binary_label: None,
            },
        ];
        Corpus::from_parts(docs, qa)
    }

    #[test]
    fn label_corpus_gates_on_detection_and_confidence() {
        let mut corpus = label_test_corpus();
        let examples = labeled_examples();
        let vocab = vocab_from(&examples);
        let model = train_polarity(&examples, &vocab, &LabelerConfig::default()).unwrap();
        let cfg = LabelerConfig {
            keep_fraction: 0.5,
            ..LabelerConfig::default()
        };
        let report = label_corpus(&mut corpus, &model, &vocab, &cfg).unwrap();
        // Three detected (is/does/will), ceil(0.5 * 3) = 2 kept.
        assert_eq!(report.detected, 3);
        assert_eq!(report.labeled, 2);
        // The non-question stays unlabeled regardless of its answer.
        assert_eq!(corpus.qa()[2].binary_label, None);
        // The clear yes/no answers beat the vague one on confidence.
        assert_eq!(corpus.qa()[0].binary_label, Some(Polarity::Yes));
        assert_eq!(corpus.qa()[1].binary_label, Some(Polarity::No));
        assert_eq!(corpus.qa()[3].binary_label, None);
    }

    #[test]
    fn smaller_keep_fraction_labels_a_subset() {
        let examples = labeled_examples();
        let vocab = vocab_from(&examples);
        let model = train_polarity(&examples, &vocab, &LabelerConfig::default()).unwrap();
        let labeled_at = |frac: f64| {
            let mut corpus = label_test_corpus();
            let cfg = LabelerConfig {
                keep_fraction: frac,
                ..LabelerConfig::default()
            };
            label_corpus(&mut corpus, &model, &vocab, &cfg).unwrap();
            let set: Vec<usize> = corpus
                .qa()
                .iter()
                .enumerate()
                .filter(|(_, r)| r.binary_label.is_some())
                .map(|(i, _)| i)
                .collect();
            set
        };
        let small = labeled_at(0.34);
        let big = labeled_at(1.0);
        assert!(small.len() < big.len());
        assert!(small.iter().all(|i| big.contains(i)));
    }

    #[test]
    fn bootstrap_prefers_explicit_labels() {
        let mut corpus = label_test_corpus();
        // Explicit label contradicting the answer's first word must win.
        corpus.set_label(0, Some(Polarity::No));
        let pairs = bootstrap_polarity_examples(&corpus);
        assert!(pairs.contains(&("yes very good".to_string(), Polarity::No)));
        assert!(pairs.contains(&("no never broke".to_string(), Polarity::No)));
        assert_eq!(pairs.len(), 2);
    }
}
