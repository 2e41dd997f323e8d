//! Question/answer/review corpus: loading, sentence splitting, splits, persistence.
//!
//! A corpus directory holds `reviews.jsonl`, `qa.jsonl`, optionally
//! `descriptions.jsonl`, and `splits.json`. Review and description lines are
//! split into sentence-level documents at ingest time.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MoqaError, Result};
use crate::textproc::tokenize;

/// Where a document's text came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocSource {
    Review,
    Description,
}

impl std::fmt::Display for DocSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DocSource::Review => write!(f, "review"),
            DocSource::Description => write!(f, "description"),
        }
    }
}

/// A yes/no answer label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Yes,
    No,
}

impl Polarity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Polarity::Yes => "yes",
            Polarity::No => "no",
        }
    }

    pub fn parse(s: &str) -> Option<Polarity> {
        match s {
            "yes" => Some(Polarity::Yes),
            "no" => Some(Polarity::No),
            _ => None,
        }
    }
}

/// One sentence-level document. Empty-token sentences are dropped at ingest.
#[derive(Debug, Clone, PartialEq)]
pub struct ReviewDoc {
    pub product_id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub source: DocSource,
}

/// One question with its top answer and an optional yes/no label.
#[derive(Debug, Clone, PartialEq)]
pub struct QaRecord {
    pub product_id: String,
    pub question: String,
    pub answer: String,
    pub binary_label: Option<Polarity>,
}

/// Disjoint train/validation/test question index sets.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "valid" | "validation" => Some(Split::Valid),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Valid => write!(f, "valid"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// Counters from an ingestion pass. Malformed lines are skipped, not fatal.
#[derive(Debug, Clone, Copy, Default)]
pub struct IngestReport {
    pub review_lines: usize,
    pub review_docs: usize,
    pub reviews_skipped: usize,
    pub description_lines: usize,
    pub description_docs: usize,
    pub descriptions_skipped: usize,
    pub qa_records: usize,
    pub qa_skipped: usize,
}

/// The full corpus: sentence-level documents grouped by product, QA records,
/// and question splits. Immutable once constructed except for labeling and
/// split assignment.
#[derive(Debug, Clone)]
pub struct Corpus {
    docs: Vec<ReviewDoc>,
    qa: Vec<QaRecord>,
    review_groups: HashMap<String, Vec<usize>>,
    description_groups: HashMap<String, Vec<usize>>,
    splits: Splits,
}

#[derive(Deserialize)]
struct ReviewLine {
    product_id: String,
    text: String,
}

#[derive(Serialize, Deserialize)]
struct QaLine {
    product_id: String,
    question: String,
    answer: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

/// Split text after '.', '!' or '?' when followed by whitespace or the end of
/// the string. Sentences keep their terminator; whitespace-only pieces are
/// dropped. Splitting an already-split sentence returns it unchanged.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    for i in 0..chars.len() {
        if matches!(chars[i], '.' | '!' | '?') {
            let at_end = i + 1 == chars.len();
            if at_end || chars[i + 1].is_whitespace() {
                push_sentence(&mut out, &chars[start..=i]);
                start = i + 1;
            }
        }
    }
    if start < chars.len() {
        push_sentence(&mut out, &chars[start..]);
    }
    out
}

fn push_sentence(out: &mut Vec<String>, chars: &[char]) {
    let s: String = chars.iter().collect();
    let trimmed = s.trim();
    if !trimmed.is_empty() {
        out.push(trimmed.to_string());
    }
}

fn doc_source_label(source: DocSource) -> &'static str {
    match source {
        DocSource::Review => "reviews",
        DocSource::Description => "descriptions",
    }
}

/// Read one JSONL document file, splitting each line's text into sentence
/// documents. Returns the docs plus (lines read, lines skipped).
fn ingest_docs(path: &Path, source: DocSource) -> Result<(Vec<ReviewDoc>, usize, usize)> {
    let file = File::open(path).map_err(|e| MoqaError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let reader = BufReader::new(file);
    let mut docs = Vec::new();
    let mut lines = 0usize;
    let mut skipped = 0usize;
    for line in reader.lines() {
        let line = line.map_err(|e| MoqaError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        lines += 1;
        let parsed: ReviewLine = match serde_json::from_str(&line) {
            Ok(p) => p,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        if parsed.product_id.is_empty() {
            skipped += 1;
            continue;
        }
        for sentence in split_sentences(&parsed.text) {
            let tokens = tokenize(&sentence);
            if tokens.is_empty() {
                continue;
            }
            docs.push(ReviewDoc {
                product_id: parsed.product_id.clone(),
                text: sentence,
                tokens,
                source,
            });
        }
    }
    if docs.is_empty() {
        return Err(MoqaError::EmptyCorpus {
            path: format!("{} ({})", path.display(), doc_source_label(source)),
        });
    }
    Ok((docs, lines, skipped))
}

fn ingest_qa(path: &Path) -> Result<(Vec<QaRecord>, usize)> {
    let file = File::open(path).map_err(|e| MoqaError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let reader = BufReader::new(file);
    let mut qa = Vec::new();
    let mut skipped = 0usize;
    for line in reader.lines() {
        let line = line.map_err(|e| MoqaError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: QaLine = match serde_json::from_str(&line) {
            Ok(p) => p,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        if parsed.product_id.is_empty() {
            skipped += 1;
            continue;
        }
        let binary_label = match parsed.label.as_deref() {
            None => None,
            Some(raw) => match Polarity::parse(raw) {
                Some(p) => Some(p),
                None => {
                    skipped += 1;
                    continue;
                }
            },
        };
        qa.push(QaRecord {
            product_id: parsed.product_id,
            question: parsed.question,
            answer: parsed.answer,
            binary_label,
        });
    }
    if qa.is_empty() {
        return Err(MoqaError::EmptyCorpus {
            path: format!("{} (qa)", path.display()),
        });
    }
    Ok((qa, skipped))
}

impl Corpus {
    /// Build a corpus from already-constructed parts. All questions start in
    /// the train split.
    pub fn from_parts(docs: Vec<ReviewDoc>, qa: Vec<QaRecord>) -> Corpus {
        let mut review_groups: HashMap<String, Vec<usize>> = HashMap::new();
        let mut description_groups: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, doc) in docs.iter().enumerate() {
            let groups = match doc.source {
                DocSource::Review => &mut review_groups,
                DocSource::Description => &mut description_groups,
            };
            groups.entry(doc.product_id.clone()).or_default().push(i);
        }
        let splits = Splits {
            train: (0..qa.len()).collect(),
            valid: Vec::new(),
            test: Vec::new(),
        };
        Corpus {
            docs,
            qa,
            review_groups,
            description_groups,
            splits,
        }
    }

    /// Ingest raw JSONL files into a corpus.
    pub fn ingest(
        reviews_path: &Path,
        qa_path: &Path,
        descriptions_path: Option<&Path>,
    ) -> Result<(Corpus, IngestReport)> {
        let mut report = IngestReport::default();
        let (mut docs, lines, skipped) = ingest_docs(reviews_path, DocSource::Review)?;
        report.review_lines = lines;
        report.reviews_skipped = skipped;
        report.review_docs = docs.len();
        if let Some(desc_path) = descriptions_path {
            let (desc_docs, lines, skipped) = ingest_docs(desc_path, DocSource::Description)?;
            report.description_lines = lines;
            report.descriptions_skipped = skipped;
            report.description_docs = desc_docs.len();
            docs.extend(desc_docs);
        }
        let (qa, qa_skipped) = ingest_qa(qa_path)?;
        report.qa_records = qa.len();
        report.qa_skipped = qa_skipped;
        Ok((Corpus::from_parts(docs, qa), report))
    }

    pub fn docs(&self) -> &[ReviewDoc] {
        &self.docs
    }

    pub fn qa(&self) -> &[QaRecord] {
        &self.qa
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    /// Indices of the documents for a product, O(1) group lookup. Empty slice
    /// for unknown products.
    pub fn docs_for(&self, product_id: &str, source: DocSource) -> &[usize] {
        let groups = match source {
            DocSource::Review => &self.review_groups,
            DocSource::Description => &self.description_groups,
        };
        groups.get(product_id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Product ids that have at least one document of `source`, sorted.
    pub fn product_ids(&self, source: DocSource) -> Vec<&str> {
        let groups = match source {
            DocSource::Review => &self.review_groups,
            DocSource::Description => &self.description_groups,
        };
        let mut ids: Vec<&str> = groups.keys().map(String::as_str).collect();
        ids.sort_unstable();
        ids
    }

    pub fn split_indices(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.splits.train,
            Split::Valid => &self.splits.valid,
            Split::Test => &self.splits.test,
        }
    }

    /// Question indices in `split` whose product has at least one document of
    /// `source`. Questions without documents are excluded from training and
    /// evaluation.
    pub fn usable_indices(&self, split: Split, source: DocSource) -> Vec<usize> {
        self.split_indices(split)
            .iter()
            .copied()
            .filter(|&i| !self.docs_for(&self.qa[i].product_id, source).is_empty())
            .collect()
    }

    pub fn set_label(&mut self, qa_index: usize, label: Option<Polarity>) {
        self.qa[qa_index].binary_label = label;
    }

    pub fn set_answer(&mut self, qa_index: usize, answer: String) {
        self.qa[qa_index].answer = answer;
    }

    /// Replace the splits after validating that they partition the question
    /// indices.
    pub fn set_splits(&mut self, splits: Splits) -> Result<()> {
        let mut seen = vec![false; self.qa.len()];
        let mut count = 0usize;
        for &i in splits
            .train
            .iter()
            .chain(splits.valid.iter())
            .chain(splits.test.iter())
        {
            if i >= self.qa.len() || seen[i] {
                return Err(MoqaError::InvalidInput(format!(
                    "splits do not partition question indices (index {i})"
                )));
            }
            seen[i] = true;
            count += 1;
        }
        if count != self.qa.len() {
            return Err(MoqaError::InvalidInput(format!(
                "splits cover {count} of {} questions",
                self.qa.len()
            )));
        }
        self.splits = splits;
        Ok(())
    }

    /// Randomly partition questions into train/valid/test with the given
    /// fractions. Deterministic for a fixed seed. Sizes follow a
    /// floor-then-distribute rule: each part gets floor(fraction * n)
    /// questions and the remainder goes to the parts with the largest
    /// fractional parts (earlier part wins ties).
    pub fn make_splits(&mut self, fractions: [f64; 3], seed: u64) -> Result<()> {
        if fractions.iter().any(|&f| f <= 0.0)
            || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(MoqaError::InvalidFractions(fractions));
        }
        let n = self.qa.len();
        if n < 3 {
            return Err(MoqaError::TooFewQuestions { n });
        }

        let mut sizes = [0usize; 3];
        let mut remainders = [0f64; 3];
        for i in 0..3 {
            let exact = fractions[i] * n as f64;
            sizes[i] = exact.floor() as usize;
            remainders[i] = exact - exact.floor();
        }
        let mut leftover = n - sizes.iter().sum::<usize>();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            remainders[b]
                .partial_cmp(&remainders[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        for &i in &order {
            if leftover == 0 {
                break;
            }
            sizes[i] += 1;
            leftover -= 1;
        }

        let mut indices: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);

        let train = indices[..sizes[0]].to_vec();
        let valid = indices[sizes[0]..sizes[0] + sizes[1]].to_vec();
        let test = indices[sizes[0] + sizes[1]..].to_vec();
        self.splits = Splits { train, valid, test };
        Ok(())
    }

    /// Persist the corpus as a directory of JSONL files plus a splits file.
    /// Each document is written as its own line, so reloading (which splits
    /// sentences again) reproduces the same documents.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| MoqaError::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
        self.save_docs(&dir.join("reviews.jsonl"), DocSource::Review)?;
        if self.docs.iter().any(|d| d.source == DocSource::Description) {
            self.save_docs(&dir.join("descriptions.jsonl"), DocSource::Description)?;
        }

        let qa_path = dir.join("qa.jsonl");
        let mut w = create_writer(&qa_path)?;
        for record in &self.qa {
            let line = QaLine {
                product_id: record.product_id.clone(),
                question: record.question.clone(),
                answer: record.answer.clone(),
                label: record.binary_label.map(|p| p.as_str().to_string()),
            };
            write_json_line(&mut w, &qa_path, &line)?;
        }
        drop(w);

        let splits_path = dir.join("splits.json");
        let file = File::create(&splits_path).map_err(|e| MoqaError::Io {
            path: splits_path.display().to_string(),
            source: e,
        })?;
        serde_json::to_writer(BufWriter::new(file), &self.splits).map_err(|e| {
            MoqaError::InvalidInput(format!("cannot serialize splits: {e}"))
        })?;
        Ok(())
    }

    fn save_docs(&self, path: &Path, source: DocSource) -> Result<()> {
        let mut w = create_writer(path)?;
        for doc in self.docs.iter().filter(|d| d.source == source) {
            let line = serde_json::json!({
                "product_id": doc.product_id,
                "text": doc.text,
            });
            write_json_line(&mut w, path, &line)?;
        }
        Ok(())
    }

    /// Load a corpus directory written by [`Corpus::save`] (or assembled by
    /// hand in the same layout).
    pub fn load(dir: &Path) -> Result<Corpus> {
        let reviews = dir.join("reviews.jsonl");
        let qa = dir.join("qa.jsonl");
        let descriptions = dir.join("descriptions.jsonl");
        let desc_arg = descriptions.exists().then_some(descriptions.as_path());
        let (mut corpus, _) = Corpus::ingest(&reviews, &qa, desc_arg)?;

        let splits_path = dir.join("splits.json");
        if splits_path.exists() {
            let file = File::open(&splits_path).map_err(|e| MoqaError::Io {
                path: splits_path.display().to_string(),
                source: e,
            })?;
            let splits: Splits = serde_json::from_reader(BufReader::new(file)).map_err(|e| {
                MoqaError::InvalidInput(format!("cannot parse splits.json: {e}"))
            })?;
            corpus.set_splits(splits)?;
        }
        Ok(corpus)
    }
}

fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| MoqaError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(BufWriter::new(file))
}

fn write_json_line<T: Serialize>(w: &mut BufWriter<File>, path: &Path, value: &T) -> Result<()> {
    let io_err = |e: std::io::Error| MoqaError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let line = serde_json::to_string(value)
        .map_err(|e| MoqaError::InvalidInput(format!("cannot serialize line: {e}")))?;
    w.write_all(line.as_bytes()).map_err(io_err)?;
    w.write_all(b"\n").map_err(io_err)?;
    Ok(())
}
