//! Pairwise text similarity features: cosine, BM25+, and ROUGE-L.

use serde::{Deserialize, Serialize};

use crate::textproc::{BowVector, CorpusStats, TextRepr, Vocabulary};

/// Number of pairwise similarity features.
pub const NUM_SIM_FEATURES: usize = 3;

/// BM25+ parameters. `flat_delta` adds the lower-bound bonus for every
/// in-vocabulary query term; the default adds it only for matching terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Config {
    pub k1: f64,
    pub b: f64,
    pub delta: f64,
    pub flat_delta: bool,
}

impl Default for Bm25Config {
    fn default() -> Bm25Config {
        Bm25Config {
            k1: 1.2,
            b: 0.75,
            delta: 1.0,
            flat_delta: false,
        }
    }
}

/// The similarity feature vector for one (query, document) pair, in the order
/// used by the relevance model's feature weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityFeatures {
    pub cosine: f64,
    pub bm25p: f64,
    pub rouge_l: f64,
}

impl SimilarityFeatures {
    pub fn as_array(&self) -> [f64; NUM_SIM_FEATURES] {
        [self.cosine, self.bm25p, self.rouge_l]
    }
}

/// Cosine similarity of raw term-count vectors; 0 when either is zero.
pub fn cosine(q: &BowVector, d: &BowVector) -> f64 {
    let denom = q.norm() * d.norm();
    if denom == 0.0 {
        0.0
    } else {
        q.dot(d) / denom
    }
}

/// Cosine with per-term diagonal weights applied to the product: sum of
/// theta[f] * q[f] * d[f] over the norms. 0 when either vector is zero.
pub fn weighted_cosine(q: &BowVector, d: &BowVector, theta: &[f64]) -> f64 {
    let denom = q.norm() * d.norm();
    if denom == 0.0 {
        0.0
    } else {
        q.weighted_dot(d, theta) / denom
    }
}

/// Smoothed inverse document frequency for a term index.
pub fn idf(stats: &CorpusStats, term: u32) -> f64 {
    let n = stats.n_docs as f64;
    let df = stats.doc_freq[term as usize] as f64;
    ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
}

/// BM25+ score of a document for a query, summed over query token instances.
/// Out-of-vocabulary query tokens contribute nothing. `d_len` is the full
/// document token count (including out-of-vocabulary tokens).
pub fn bm25_plus(
    q_tokens: &[String],
    vocab: &Vocabulary,
    d: &BowVector,
    d_len: usize,
    stats: &CorpusStats,
    cfg: &Bm25Config,
) -> f64 {
    let mut score = 0.0;
    for token in q_tokens {
        let Some(i) = vocab.index_of(token) else {
            continue;
        };
        let idf = idf(stats, i);
        let f = d.get(i);
        if f > 0.0 {
            let denom = f + cfg.k1 * (1.0 - cfg.b + cfg.b * d_len as f64 / stats.avgdl);
            score += idf * f * (cfg.k1 + 1.0) / denom;
            if !cfg.flat_delta {
                score += cfg.delta * idf;
            }
        }
        if cfg.flat_delta {
            score += cfg.delta * idf;
        }
    }
    score
}

/// Length of the longest common subsequence, O(min(m, n)) memory.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; short.len() + 1];
    let mut curr = vec![0usize; short.len() + 1];
    for x in long {
        for (j, y) in short.iter().enumerate() {
            curr[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[short.len()]
}

/// ROUGE-L F-measure with equal precision/recall weight:
/// 2L / (|q| + |d|) where L is the LCS length. 0 when either side is empty
/// or nothing is shared.
pub fn rouge_l(q_tokens: &[String], d_tokens: &[String]) -> f64 {
    let l = lcs_len(q_tokens, d_tokens);
    if l == 0 {
        return 0.0;
    }
    2.0 * l as f64 / (q_tokens.len() + d_tokens.len()) as f64
}

/// All pairwise features for a (query, document) pair.
pub fn features(
    q: &TextRepr,
    d: &TextRepr,
    vocab: &Vocabulary,
    stats: &CorpusStats,
    cfg: &Bm25Config,
) -> SimilarityFeatures {
    SimilarityFeatures {
        cosine: cosine(&q.bow, &d.bow),
        bm25p: bm25_plus(&q.tokens, vocab, &d.bow, d.tokens.len(), stats, cfg),
        rouge_l: rouge_l(&q.tokens, &d.tokens),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, DocSource, QaRecord, ReviewDoc};
    use crate::textproc::tokenize;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    fn setup(doc_texts: &[&str]) -> (Corpus, Vocabulary, CorpusStats) {
        let docs = doc_texts
            .iter()
            .map(|t| ReviewDoc {
                product_id: "p".into(),
                text: t.to_string(),
                tokens: toks(t),
                source: DocSource::Review,
            })
            .collect();
        let qa = vec![QaRecord {
            product_id: "p".into(),
            question: String::new(),
            answer: String::new(),
            binary_label: None,
        }];
        let corpus = Corpus::from_parts(docs, qa);
        let vocab = Vocabulary::build(&corpus, 100, DocSource::Review).unwrap();
        let stats = CorpusStats::compute(&corpus, &vocab, DocSource::Review).unwrap();
        (corpus, vocab, stats)
    }

    #[test]
    fn cosine_basic_identities() {
        let (_, vocab, _) = setup(&["a b c"]);
        let v = |s: &str| BowVector::vectorize(&toks(s), &vocab);
        assert!((cosine(&v("a b"), &v("a b")) - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&v("a"), &v("b")), 0.0);
        assert_eq!(cosine(&v(""), &v("a")), 0.0);
    }

    #[test]
    fn weighted_cosine_matches_plain_with_unit_weights() {
        let (_, vocab, _) = setup(&["a b c"]);
        let v = |s: &str| BowVector::vectorize(&toks(s), &vocab);
        let w = vec![1.0; vocab.size()];
        let (q, d) = (v("a b"), v("b c"));
        assert!((weighted_cosine(&q, &d, &w) - cosine(&q, &d)).abs() < 1e-12);
        let zeros = vec![0.0; vocab.size()];
        assert_eq!(weighted_cosine(&q, &d, &zeros), 0.0);
    }

    #[test]
    fn bm25_anchor_at_average_length() {
        // With one occurrence in a document of exactly average length and
        // delta = 0, the per-term score collapses to the idf alone.
        let (_, vocab, stats) = setup(&["apple pear", "plum fig"]);
        let cfg = Bm25Config {
            delta: 0.0,
            ..Bm25Config::default()
        };
        let d = BowVector::vectorize(&toks("apple pear"), &vocab);
        let got = bm25_plus(&toks("apple"), &vocab, &d, 2, &stats, &cfg);
        let want = idf(&stats, vocab.index_of("apple").unwrap());
        assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
    }

    #[test]
    fn bm25_monotone_in_term_frequency() {
        let (_, vocab, stats) = setup(&["apple apple apple pear", "plum fig"]);
        let cfg = Bm25Config::default();
        let q = toks("apple");
        let mut prev = 0.0;
        for f in 1..=3 {
            let text = vec!["apple"; f].join(" ");
            let d = BowVector::vectorize(&toks(&text), &vocab);
            let score = bm25_plus(&q, &vocab, &d, f, &stats, &cfg);
            assert!(score > prev, "tf={f}: {score} not above {prev}");
            prev = score;
        }
    }

    #[test]
    fn bm25_ignores_oov_and_empty() {
        let (_, vocab, stats) = setup(&["apple pear"]);
        let cfg = Bm25Config::default();
        let d = BowVector::vectorize(&toks("apple"), &vocab);
        assert_eq!(bm25_plus(&toks("zzz"), &vocab, &d, 1, &stats, &cfg), 0.0);
        assert_eq!(bm25_plus(&[], &vocab, &d, 1, &stats, &cfg), 0.0);
        let empty = BowVector::empty();
        assert_eq!(bm25_plus(&toks("apple"), &vocab, &empty, 0, &stats, &cfg), 0.0);
    }

    #[test]
    fn bm25_flat_delta_pays_nonmatching_terms() {
        let (_, vocab, stats) = setup(&["apple pear", "plum fig"]);
        let flat = Bm25Config {
            flat_delta: true,
            ..Bm25Config::default()
        };
        let matched = Bm25Config::default();
        let d = BowVector::vectorize(&toks("plum"), &vocab);
        // "apple" misses the document: the flat variant still pays delta*idf.
        let got_flat = bm25_plus(&toks("apple"), &vocab, &d, 1, &stats, &flat);
        let got_matched = bm25_plus(&toks("apple"), &vocab, &d, 1, &stats, &matched);
        assert_eq!(got_matched, 0.0);
        let want = flat.delta * idf(&stats, vocab.index_of("apple").unwrap());
        assert!((got_flat - want).abs() < 1e-12);
    }

    #[test]
    fn bm25_counts_repeated_query_tokens_per_instance() {
        let (_, vocab, stats) = setup(&["apple pear", "plum fig"]);
        let cfg = Bm25Config::default();
        let d = BowVector::vectorize(&toks("apple pear"), &vocab);
        let once = bm25_plus(&toks("apple"), &vocab, &d, 2, &stats, &cfg);
        let twice = bm25_plus(&toks("apple apple"), &vocab, &d, 2, &stats, &cfg);
        assert!((twice - 2.0 * once).abs() < 1e-12);
    }

    #[test]
    fn lcs_known_cases() {
        let a = toks("the cat sat on the mat");
        let b = toks("the dog sat on a mat");
        assert_eq!(lcs_len(&a, &b), 4);
        assert_eq!(lcs_len(&a, &a), 6);
        assert_eq!(lcs_len(&a, &[]), 0);
    }

    #[test]
    fn rouge_l_identical_and_disjoint() {
        let a = toks("great fit for kids");
        assert!((rouge_l(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(rouge_l(&a, &toks("terrible noise")), 0.0);
        assert_eq!(rouge_l(&a, &[]), 0.0);
        assert_eq!(rouge_l(&[], &[]), 0.0);
    }

    #[test]
    fn rouge_l_partial_overlap() {
        // LCS("a b c d", "a c d e") = "a c d", F = 2*3/(4+4).
        let got = rouge_l(&toks("a b c d"), &toks("a c d e"));
        assert!((got - 0.75).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn lcs_is_symmetric_and_bounded(
            a in proptest::collection::vec("[ab]{1}", 0..8),
            b in proptest::collection::vec("[ab]{1}", 0..8),
        ) {
            let l = lcs_len(&a, &b);
            prop_assert_eq!(l, lcs_len(&b, &a));
            prop_assert!(l <= a.len().min(b.len()));
        }

        #[test]
        fn rouge_l_in_unit_interval(
            a in proptest::collection::vec("[abc]{1}", 0..8),
            b in proptest::collection::vec("[abc]{1}", 0..8),
        ) {
            let r = rouge_l(&a, &b);
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }
}
