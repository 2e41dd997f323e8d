//! Tokenization, vocabulary construction, and sparse bag-of-words vectors.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DocSource};
use crate::error::{MoqaError, Result};

/// Lowercase a text and split it into maximal runs of Unicode alphanumerics.
/// Everything else is a separator.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// A fixed term list with O(1) term-to-index lookup. Index order is vocabulary
/// rank: descending corpus frequency, ties broken lexicographically.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = MoqaError;

    fn try_from(terms: Vec<String>) -> Result<Self> {
        Vocabulary::from_terms(terms)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Vec<String> {
        v.terms
    }
}

impl Vocabulary {
    /// Build a vocabulary from an explicit term list, validating uniqueness.
    pub fn from_terms(terms: Vec<String>) -> Result<Vocabulary> {
        if terms.is_empty() {
            return Err(MoqaError::InvalidInput("empty vocabulary".into()));
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (i, term) in terms.iter().enumerate() {
            if term.is_empty() {
                return Err(MoqaError::InvalidInput("empty vocabulary term".into()));
            }
            if index.insert(term.clone(), i as u32).is_some() {
                return Err(MoqaError::InvalidInput(format!(
                    "duplicate vocabulary term {term:?}"
                )));
            }
        }
        Ok(Vocabulary { terms, index })
    }

    /// Count tokens over the corpus documents of `source` plus all questions
    /// and answers, and keep the `f` most frequent terms. If the corpus has
    /// fewer distinct tokens the vocabulary shrinks to that count.
    pub fn build(corpus: &Corpus, f: usize, source: DocSource) -> Result<Vocabulary> {
        if f == 0 {
            return Err(MoqaError::InvalidInput(
                "vocabulary size must be at least 1".into(),
            ));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        for doc in corpus.docs().iter().filter(|d| d.source == source) {
            for token in &doc.tokens {
                *counts.entry(token.clone()).or_insert(0) += 1;
            }
        }
        for record in corpus.qa() {
            for token in tokenize(&record.question) {
                *counts.entry(token).or_insert(0) += 1;
            }
            for token in tokenize(&record.answer) {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        if counts.is_empty() {
            return Err(MoqaError::InvalidInput(
                "corpus has no tokens to build a vocabulary from".into(),
            ));
        }
        let mut items: Vec<(String, u64)> = counts.into_iter().collect();
        items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        if items.len() < f {
            log::warn!(
                "vocabulary request {f} exceeds {} distinct tokens; shrinking",
                items.len()
            );
        }
        items.truncate(f);
        Vocabulary::from_terms(items.into_iter().map(|(t, _)| t).collect())
    }

    pub fn size(&self) -> usize {
        self.terms.len()
    }

    pub fn index_of(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: u32) -> &str {
        &self.terms[index as usize]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// Write the terms in rank order, one per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let io_err = |e: std::io::Error| MoqaError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        for term in &self.terms {
            writeln!(w, "{term}").map_err(io_err)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        let io_err = |e: std::io::Error| MoqaError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let reader = BufReader::new(File::open(path).map_err(io_err)?);
        let mut terms = Vec::new();
        for line in reader.lines() {
            let line = line.map_err(io_err)?;
            if !line.is_empty() {
                terms.push(line);
            }
        }
        Vocabulary::from_terms(terms)
    }
}

/// Sparse term-count vector. Entries are sorted by term index with strictly
/// positive weights; the Euclidean norm is cached at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct BowVector {
    entries: Vec<(u32, f64)>,
    norm: f64,
}

impl BowVector {
    pub fn empty() -> BowVector {
        BowVector {
            entries: Vec::new(),
            norm: 0.0,
        }
    }

    /// Build from (index, weight) pairs. Pairs need not be sorted; duplicate
    /// indices are summed and non-positive weights rejected.
    pub fn from_entries(pairs: Vec<(u32, f64)>) -> Result<BowVector> {
        let mut map: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, w) in pairs {
            if !w.is_finite() || w <= 0.0 {
                return Err(MoqaError::InvalidInput(format!(
                    "bag-of-words weight must be finite and positive, got {w}"
                )));
            }
            *map.entry(i).or_insert(0.0) += w;
        }
        Ok(Self::from_sorted(map.into_iter().collect()))
    }

    fn from_sorted(entries: Vec<(u32, f64)>) -> BowVector {
        let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        BowVector { entries, norm }
    }

    /// Count in-vocabulary tokens. Out-of-vocabulary tokens are dropped.
    pub fn vectorize(tokens: &[String], vocab: &Vocabulary) -> BowVector {
        let mut map: BTreeMap<u32, f64> = BTreeMap::new();
        for token in tokens {
            if let Some(i) = vocab.index_of(token) {
                *map.entry(i).or_insert(0.0) += 1.0;
            }
        }
        Self::from_sorted(map.into_iter().collect())
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Weight at a term index, 0.0 when absent.
    pub fn get(&self, index: u32) -> f64 {
        match self.entries.binary_search_by_key(&index, |e| e.0) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    /// Sparse dot product by merge join over the sorted entries.
    pub fn dot(&self, other: &BowVector) -> f64 {
        let mut sum = 0.0;
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }

    /// Diagonal-weighted dot product: sum of weights[f] * self[f] * other[f]
    /// over the shared support. `weights` must cover every stored index.
    pub fn weighted_dot(&self, other: &BowVector, weights: &[f64]) -> f64 {
        let mut sum = 0.0;
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += weights[a[i].0 as usize] * a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }

    /// Visit every index present in both vectors with both weights.
    pub fn for_shared(&self, other: &BowVector, mut visit: impl FnMut(u32, f64, f64)) {
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    visit(a[i].0, a[i].1, b[j].1);
                    i += 1;
                    j += 1;
                }
            }
        }
    }

    /// Unit-normalized copy. The zero vector stays zero.
    pub fn normalized(&self) -> BowVector {
        if self.norm == 0.0 {
            return self.clone();
        }
        let entries: Vec<(u32, f64)> = self
            .entries
            .iter()
            .map(|&(i, w)| (i, w / self.norm))
            .collect();
        Self::from_sorted(entries)
    }
}

/// Document-frequency and length statistics over one document source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_docs: usize,
    pub doc_freq: Vec<u32>,
    pub avgdl: f64,
}

impl CorpusStats {
    /// Compute stats over the corpus documents of `source` against `vocab`.
    pub fn compute(corpus: &Corpus, vocab: &Vocabulary, source: DocSource) -> Result<CorpusStats> {
        let mut n_docs = 0usize;
        let mut total_len = 0usize;
        let mut doc_freq = vec![0u32; vocab.size()];
        let mut seen: Vec<u32> = Vec::new();
        for doc in corpus.docs().iter().filter(|d| d.source == source) {
            n_docs += 1;
            total_len += doc.tokens.len();
            seen.clear();
            seen.extend(doc.tokens.iter().filter_map(|t| vocab.index_of(t)));
            seen.sort_unstable();
            seen.dedup();
            for &i in &seen {
                doc_freq[i as usize] += 1;
            }
        }
        if n_docs == 0 {
            return Err(MoqaError::InvalidInput(format!(
                "no {source} documents to compute stats over"
            )));
        }
        Ok(CorpusStats {
            n_docs,
            doc_freq,
            avgdl: total_len as f64 / n_docs as f64,
        })
    }

    /// Write as a flat key/value text file: N, avgdl, then term<TAB>doc_freq
    /// lines in vocabulary order.
    pub fn save(&self, path: &Path, vocab: &Vocabulary) -> Result<()> {
        if self.doc_freq.len() != vocab.size() {
            return Err(MoqaError::DimensionMismatch {
                expected: vocab.size(),
                got: self.doc_freq.len(),
                context: "stats doc_freq vs vocabulary".into(),
            });
        }
        let io_err = |e: std::io::Error| MoqaError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        writeln!(w, "N\t{}", self.n_docs).map_err(io_err)?;
        writeln!(w, "avgdl\t{}", self.avgdl).map_err(io_err)?;
        for (i, df) in self.doc_freq.iter().enumerate() {
            writeln!(w, "{}\t{}", vocab.term(i as u32), df).map_err(io_err)?;
        }
        Ok(())
    }

    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<CorpusStats> {
        let io_err = |e: std::io::Error| MoqaError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let bad = |msg: &str| MoqaError::InvalidInput(format!("{}: {msg}", path.display()));
        let reader = BufReader::new(File::open(path).map_err(io_err)?);
        let mut n_docs = None;
        let mut avgdl = None;
        let mut doc_freq = vec![0u32; vocab.size()];
        for line in reader.lines() {
            let line = line.map_err(io_err)?;
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected key<TAB>value"))?;
            match key {
                "N" => n_docs = Some(value.parse().map_err(|_| bad("bad N"))?),
                "avgdl" => avgdl = Some(value.parse().map_err(|_| bad("bad avgdl"))?),
                term => {
                    let i = vocab
                        .index_of(term)
                        .ok_or_else(|| bad("term not in vocabulary"))?;
                    doc_freq[i as usize] = value.parse().map_err(|_| bad("bad doc_freq"))?;
                }
            }
        }
        Ok(CorpusStats {
            n_docs: n_docs.ok_or_else(|| bad("missing N"))?,
            doc_freq,
            avgdl: avgdl.ok_or_else(|| bad("missing avgdl"))?,
        })
    }
}

/// A text with its tokens, raw term counts, and unit-normalized counts.
#[derive(Debug, Clone, PartialEq)]
pub struct TextRepr {
    pub tokens: Vec<String>,
    pub bow: BowVector,
    pub unit: BowVector,
}

impl TextRepr {
    pub fn new(text: &str, vocab: &Vocabulary) -> TextRepr {
        Self::from_tokens(tokenize(text), vocab)
    }

    pub fn from_tokens(tokens: Vec<String>, vocab: &Vocabulary) -> TextRepr {
        let bow = BowVector::vectorize(&tokens, vocab);
        let unit = bow.normalized();
        TextRepr { tokens, bow, unit }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{QaRecord, ReviewDoc};
    use proptest::prelude::*;

    #[test]
    fn tokenize_lowercases_and_splits_on_non_alphanumerics() {
        assert_eq!(
            tokenize("Does it fit the 2015 model?"),
            vec!["does", "it", "fit", "the", "2015", "model"]
        );
        assert_eq!(tokenize("it's GREAT"), vec!["it", "s", "great"]);
    }

    #[test]
    fn tokenize_handles_unicode_and_empties() {
        assert_eq!(tokenize("Café—bar"), vec!["café", "bar"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize("!!! ...").is_empty());
    }

    proptest! {
        #[test]
        fn tokens_are_lowercase_alphanumeric(text in ".{0,40}") {
            for token in tokenize(&text) {
                prop_assert!(!token.is_empty());
                prop_assert!(token.chars().all(|c| c.is_alphanumeric()));
                prop_assert_eq!(token.to_lowercase(), token.clone());
            }
        }

        #[test]
        fn tokenize_is_idempotent_on_joined_tokens(text in ".{0,40}") {
            let tokens = tokenize(&text);
            let rejoined = tokens.join(" ");
            prop_assert_eq!(tokenize(&rejoined), tokens);
        }
    }

    fn corpus_from_texts(doc_texts: &[&str], qa_texts: &[(&str, &str)]) -> Corpus {
        let docs = doc_texts
            .iter()
            .map(|t| ReviewDoc {
                product_id: "p".into(),
                text: t.to_string(),
                tokens: tokenize(t),
                source: DocSource::Review,
            })
            .collect();
        let qa = qa_texts
            .iter()
            .map(|(q, a)| QaRecord {
                product_id: "p".into(),
                question: q.to_string(),
                answer: a.to_string(),
                binary_label: None,
            })
            .collect();
        Corpus::from_parts(docs, qa)
    }

    #[test]
    fn vocabulary_ranks_by_count_then_term() {
        let corpus = corpus_from_texts(&["a a a b b c"], &[("", "")]);
        let vocab = Vocabulary::build(&corpus, 2, DocSource::Review).unwrap();
        assert_eq!(vocab.terms(), ["a", "b"]);
        assert_eq!(vocab.index_of("a"), Some(0));
        assert_eq!(vocab.index_of("c"), None);
    }

    #[test]
    fn vocabulary_tie_breaks_lexicographically() {
        let corpus = corpus_from_texts(&["b a", "a b"], &[("", "")]);
        let vocab = Vocabulary::build(&corpus, 5, DocSource::Review).unwrap();
        assert_eq!(vocab.terms(), ["a", "b"]);
    }

    #[test]
    fn vocabulary_counts_questions_and_answers() {
        let corpus = corpus_from_texts(&["x"], &[("y y y", "z z")]);
        let vocab = Vocabulary::build(&corpus, 3, DocSource::Review).unwrap();
        assert_eq!(vocab.terms(), ["y", "z", "x"]);
    }

    #[test]
    fn vocabulary_shrinks_when_corpus_is_small() {
        let corpus = corpus_from_texts(&["a b"], &[("", "")]);
        let vocab = Vocabulary::build(&corpus, 100, DocSource::Review).unwrap();
        assert_eq!(vocab.size(), 2);
    }

    #[test]
    fn vocabulary_rejects_duplicates() {
        assert!(Vocabulary::from_terms(vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn vocabulary_save_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let vocab = Vocabulary::from_terms(vec!["b".into(), "a".into()]).unwrap();
        vocab.save(&path).unwrap();
        assert_eq!(Vocabulary::load(&path).unwrap(), vocab);
    }

    fn small_vocab() -> Vocabulary {
        Vocabulary::from_terms(vec!["a".into(), "b".into(), "c".into()]).unwrap()
    }

    #[test]
    fn vectorize_counts_and_drops_oov() {
        let vocab = small_vocab();
        let tokens: Vec<String> = ["a", "b", "a", "zzz"].iter().map(|s| s.to_string()).collect();
        let bow = BowVector::vectorize(&tokens, &vocab);
        assert_eq!(bow.entries(), [(0, 2.0), (1, 1.0)]);
        assert!((bow.norm() - 5.0_f64.sqrt()).abs() < 1e-15);
        assert_eq!(bow.get(0), 2.0);
        assert_eq!(bow.get(2), 0.0);
    }

    #[test]
    fn normalized_has_unit_norm_and_zero_stays_zero() {
        let vocab = small_vocab();
        let tokens: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let unit = BowVector::vectorize(&tokens, &vocab).normalized();
        assert!((unit.norm() - 1.0).abs() < 1e-12);
        let zero = BowVector::empty().normalized();
        assert!(zero.is_empty());
        assert_eq!(zero.norm(), 0.0);
    }

    #[test]
    fn dot_merges_sorted_supports() {
        let a = BowVector::from_entries(vec![(0, 1.0), (2, 3.0)]).unwrap();
        let b = BowVector::from_entries(vec![(1, 5.0), (2, 2.0)]).unwrap();
        assert_eq!(a.dot(&b), 6.0);
        assert_eq!(a.weighted_dot(&b, &[10.0, 10.0, 0.5]), 3.0);
    }

    proptest! {
        #[test]
        fn dot_matches_dense(
            a in proptest::collection::vec(0.0f64..5.0, 6),
            b in proptest::collection::vec(0.0f64..5.0, 6),
        ) {
            let sparse = |v: &[f64]| {
                let pairs: Vec<(u32, f64)> = v
                    .iter()
                    .enumerate()
                    .filter(|(_, &w)| w > 0.0)
                    .map(|(i, &w)| (i as u32, w))
                    .collect();
                BowVector::from_entries(pairs).unwrap()
            };
            let dense: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            prop_assert!((sparse(&a).dot(&sparse(&b)) - dense).abs() < 1e-9);
        }
    }

    #[test]
    fn stats_count_doc_freq_once_per_doc() {
        let corpus = corpus_from_texts(&["a a b", "a c"], &[("", "")]);
        let vocab = Vocabulary::build(&corpus, 10, DocSource::Review).unwrap();
        let stats = CorpusStats::compute(&corpus, &vocab, DocSource::Review).unwrap();
        assert_eq!(stats.n_docs, 2);
        assert!((stats.avgdl - 2.5).abs() < 1e-12);
        let df = |t: &str| stats.doc_freq[vocab.index_of(t).unwrap() as usize];
        assert_eq!(df("a"), 2);
        assert_eq!(df("b"), 1);
        assert_eq!(df("c"), 1);
    }

    #[test]
    fn stats_save_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.tsv");
        let corpus = corpus_from_texts(&["a b", "a"], &[("", "")]);
        let vocab = Vocabulary::build(&corpus, 10, DocSource::Review).unwrap();
        let stats = CorpusStats::compute(&corpus, &vocab, DocSource::Review).unwrap();
        stats.save(&path, &vocab).unwrap();
        assert_eq!(CorpusStats::load(&path, &vocab).unwrap(), stats);
    }

    #[test]
    fn stats_require_documents() {
        let corpus = corpus_from_texts(&["a"], &[("", "")]);
        let vocab = Vocabulary::build(&corpus, 10, DocSource::Review).unwrap();
        assert!(CorpusStats::compute(&corpus, &vocab, DocSource::Description).is_err());
    }
}
