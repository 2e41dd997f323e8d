//! Command-line pipeline for the opinion ranking engine: ingest raw review
//! and QA files, label yes/no questions, train models, evaluate against
//! baselines, answer queries, and generate synthetic corpora.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use moqa_core::eval::{eval_trained, results_to_csv, run_baseline};
use moqa_core::label::{bootstrap_polarity_examples, label_corpus, train_polarity};
use moqa_core::model::{binary_answer_prob, rank_opinions, score_product};
use moqa_core::synth::generate;
use moqa_core::{
    BaselineSpec, Bm25Config, Corpus, DocSource, EvalConfig, LabelerConfig, Mode, ModelConfig,
    MoqaError, ProjectionCache, Split, SynthConfig, TrainConfig, TrainReport, TrainedModel,
    Vocabulary,
};

#[derive(Parser)]
#[command(
    name = "moqa",
    version,
    about = "Opinion ranking and review-based question answering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read raw review and QA files into a corpus directory.
    Ingest(IngestArgs),
    /// Detect yes/no questions and fill in polarity labels in place.
    Label(LabelArgs),
    /// Train a model on a corpus.
    Train(TrainArgs),
    /// Evaluate a trained model or a baseline on a corpus split.
    Eval(EvalArgs),
    /// Rank a product's reviews against a question.
    Query(QueryArgs),
    /// Generate a synthetic corpus with planted structure.
    Synth(SynthArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Review file, one JSON object per line.
    #[arg(long)]
    reviews: PathBuf,
    /// Question-answer file, one JSON object per line.
    #[arg(long)]
    qa: PathBuf,
    /// Optional product description file.
    #[arg(long)]
    descriptions: Option<PathBuf>,
    /// Output corpus directory.
    #[arg(long)]
    out: PathBuf,
    /// Train/valid/test fractions.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    splits: String,
    /// Split assignment seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct LabelArgs {
    /// Corpus directory, rewritten in place.
    #[arg(long)]
    corpus: PathBuf,
    /// Fraction of detected yes/no questions to keep, by confidence.
    #[arg(long, default_value_t = 0.5)]
    keep: f64,
    /// Vocabulary size for the polarity classifier.
    #[arg(long, default_value_t = 5000)]
    f: usize,
    /// L2 strength for the polarity classifier.
    #[arg(long, default_value_t = 1e-2)]
    l2: f64,
}

#[derive(Args)]
struct ModelFlags {
    /// Low-rank factor width.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Vocabulary size cap.
    #[arg(long, default_value_t = 5000)]
    f: usize,
    /// L2 regularization strength.
    #[arg(long, default_value_t = 1e-3)]
    l2: f64,
    /// Seed for parameter init and negative sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Documents the model reads: review or description.
    #[arg(long, default_value = "review")]
    source: String,
}

impl ModelFlags {
    fn config(&self, mode: Mode) -> anyhow::Result<ModelConfig> {
        Ok(ModelConfig {
            k: self.k,
            f: self.f,
            l2: self.l2,
            seed: self.seed,
            mode,
            source: parse_source(&self.source)?,
        })
    }
}

#[derive(Args)]
struct TrainFlags {
    /// Non-answer resampling rounds (open-ended mode only).
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Non-answers sampled per question per round.
    #[arg(long, default_value_t = 10)]
    negatives: usize,
    /// L-BFGS history length.
    #[arg(long, default_value_t = 10)]
    history: usize,
    /// L-BFGS iteration cap per sampling round.
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    /// Gradient norm stopping threshold.
    #[arg(long, default_value_t = 1e-6)]
    grad_tol: f64,
}

impl TrainFlags {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            negatives_per_query: self.negatives,
            lbfgs_history: self.history,
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
        }
    }
}

#[derive(Args)]
struct Bm25Flags {
    /// BM25+ term frequency saturation.
    #[arg(long)]
    bm25_k1: Option<f64>,
    /// BM25+ length normalization.
    #[arg(long)]
    bm25_b: Option<f64>,
    /// BM25+ lower-bound bonus.
    #[arg(long)]
    bm25_delta: Option<f64>,
    /// Pay the bonus for every query term, not just matches.
    #[arg(long)]
    bm25_flat_delta: bool,
}

impl Bm25Flags {
    fn config(&self) -> Bm25Config {
        let mut cfg = Bm25Config::default();
        if let Some(k1) = self.bm25_k1 {
            cfg.k1 = k1;
        }
        if let Some(b) = self.bm25_b {
            cfg.b = b;
        }
        if let Some(delta) = self.bm25_delta {
            cfg.delta = delta;
        }
        cfg.flat_delta = self.bm25_flat_delta;
        cfg
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training mode: binary or open.
    #[arg(long)]
    mode: String,
    /// Corpus directory.
    #[arg(long)]
    corpus: PathBuf,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Write the iteration trace CSV here instead of standard output.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    bm25: Bm25Flags,
}

#[derive(Args)]
struct EvalArgs {
    /// Corpus directory.
    #[arg(long)]
    corpus: PathBuf,
    /// Baseline name: rand, moqa, mdqa, or a feature set like c, ro, cro
    /// with an optional -L suffix for learned feature weights.
    #[arg(long, default_value = "moqa")]
    baseline: String,
    /// Trained model file; required for moqa and mdqa, ignored otherwise.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Evaluation mode when no model file is given: binary or open.
    #[arg(long, default_value = "open")]
    mode: String,
    /// Corpus split to evaluate.
    #[arg(long, default_value = "test")]
    split: String,
    /// Sampled non-answers per question (open-ended mode).
    #[arg(long, default_value_t = 100)]
    negatives: usize,
    /// Seed for non-answer sampling and in-process baseline training.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the results CSV here as well.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Low-rank width for in-process baseline training.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Vocabulary cap for in-process baseline training.
    #[arg(long, default_value_t = 5000)]
    f: usize,
    /// L2 strength for in-process baseline training.
    #[arg(long, default_value_t = 1e-3)]
    l2: f64,
    /// Documents learned baselines read: review or description.
    #[arg(long, default_value = "review")]
    source: String,
    /// Training rounds for learned baselines.
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Non-answers per question per training round.
    #[arg(long, default_value_t = 10)]
    train_negatives: usize,
    /// L-BFGS iteration cap for learned baselines.
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[command(flatten)]
    bm25: Bm25Flags,
}

#[derive(Args)]
struct QueryArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Corpus directory holding the product reviews.
    #[arg(long)]
    corpus: PathBuf,
    /// Product to query.
    #[arg(long)]
    product: String,
    /// Question text; omit to read one question per line from stdin.
    #[arg(long)]
    question: Option<String>,
    /// Opinions to print.
    #[arg(long, default_value_t = 5)]
    top: usize,
    /// Emit one JSON object per question instead of tab-separated text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Output corpus directory.
    #[arg(long)]
    out: PathBuf,
    /// Products to generate.
    #[arg(long, default_value_t = 50)]
    products: usize,
    /// Reviews per product.
    #[arg(long, default_value_t = 5)]
    reviews_per_product: usize,
    /// Training questions.
    #[arg(long, default_value_t = 800)]
    train_questions: usize,
    /// Validation questions.
    #[arg(long, default_value_t = 0)]
    valid_questions: usize,
    /// Held-out test questions.
    #[arg(long, default_value_t = 200)]
    questions: usize,
    /// Distinct vocabulary terms.
    #[arg(long, default_value_t = 300)]
    vocab: usize,
    /// Question mode: binary or open.
    #[arg(long, default_value = "open")]
    mode: String,
    /// Generation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Exit status contract: 2 for unknown products, 3 for unreadable models,
/// 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<MoqaError>() {
        Some(MoqaError::UnknownProduct(_)) => 2,
        Some(MoqaError::CorruptModel { .. }) => 3,
        _ => 1,
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Label(args) => cmd_label(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Query(args) => cmd_query(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

fn parse_mode(s: &str) -> anyhow::Result<Mode> {
    Mode::parse(s).with_context(|| format!("unknown mode {s:?}: expected binary or open"))
}

fn parse_source(s: &str) -> anyhow::Result<DocSource> {
    match s {
        "review" => Ok(DocSource::Review),
        "description" => Ok(DocSource::Description),
        other => bail!("unknown source {other:?}: expected review or description"),
    }
}

fn parse_split(s: &str) -> anyhow::Result<Split> {
    Split::parse(s).with_context(|| format!("unknown split {s:?}: expected train, valid, or test"))
}

fn parse_fractions(s: &str) -> anyhow::Result<[f64; 3]> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("cannot parse split fractions {s:?}"))?;
    let [train, valid, test] = parts[..] else {
        bail!("split fractions {s:?} must have exactly three parts");
    };
    Ok([train, valid, test])
}

fn cmd_ingest(args: IngestArgs) -> anyhow::Result<()> {
    let (mut corpus, report) =
        Corpus::ingest(&args.reviews, &args.qa, args.descriptions.as_deref())?;
    corpus.make_splits(parse_fractions(&args.splits)?, args.seed)?;
    corpus.save(&args.out)?;
    println!(
        "reviews: {} sentences from {} lines ({} skipped)",
        report.review_docs, report.review_lines, report.reviews_skipped
    );
    if report.description_lines > 0 {
        println!(
            "descriptions: {} sentences from {} lines ({} skipped)",
            report.description_docs, report.description_lines, report.descriptions_skipped
        );
    }
    println!(
        "questions: {} kept, {} skipped",
        report.qa_records, report.qa_skipped
    );
    let splits = corpus.splits();
    println!(
        "splits: {} train / {} valid / {} test -> {}",
        splits.train.len(),
        splits.valid.len(),
        splits.test.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_label(args: LabelArgs) -> anyhow::Result<()> {
    let mut corpus = Corpus::load(&args.corpus)?;
    let vocab = Vocabulary::build(&corpus, args.f, DocSource::Review)?;
    let cfg = LabelerConfig {
        keep_fraction: args.keep,
        classifier_l2: args.l2,
    };
    let examples = bootstrap_polarity_examples(&corpus);
    let polarity = train_polarity(&examples, &vocab, &cfg)?;
    let report = label_corpus(&mut corpus, &polarity, &vocab, &cfg)?;
    corpus.save(&args.corpus)?;
    println!(
        "detected {} yes/no questions, labeled {}, cleared {}",
        report.detected, report.labeled, report.cleared
    );
    Ok(())
}

fn trace_csv(report: &TrainReport) -> String {
    let mut out = String::from("round,iter,loss,grad_norm\n");
    for row in &report.trace {
        out.push_str(&format!(
            "{},{},{:.6},{:.6e}\n",
            row.round, row.iter, row.loss, row.grad_norm
        ));
    }
    out
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let corpus = Corpus::load(&args.corpus)?;
    let mode = parse_mode(&args.mode)?;
    let mcfg = args.model.config(mode)?;
    let tcfg = args.train.config();
    let (model, report) = moqa_core::train::train(&corpus, &mcfg, &tcfg, &args.bm25.config())?;
    model.save(&args.out)?;
    let csv = trace_csv(&report);
    match &args.trace {
        Some(path) => fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv}"),
    }
    println!(
        "trained {} model on {} questions: {} rounds, final loss {:.6}, grad norm {:.3e}, {:.1}s -> {}",
        args.mode,
        report.instances,
        report.rounds,
        report.final_loss,
        report.final_grad_norm,
        report.wall_seconds,
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> anyhow::Result<()> {
    let corpus = Corpus::load(&args.corpus)?;
    let ecfg = EvalConfig {
        split: parse_split(&args.split)?,
        negatives: args.negatives,
        seed: args.seed,
    };
    let result = match &args.model {
        Some(path) => {
            let model = TrainedModel::load(path)?;
            eval_trained(&model, &corpus, &ecfg, &args.baseline)?
        }
        None => {
            let spec = BaselineSpec::parse(&args.baseline)?;
            let mode = parse_mode(&args.mode)?;
            let mcfg = ModelConfig {
                k: args.k,
                f: args.f,
                l2: args.l2,
                seed: args.seed,
                mode,
                source: parse_source(&args.source)?,
            };
            let tcfg = TrainConfig {
                epochs: args.epochs,
                negatives_per_query: args.train_negatives,
                max_iters: args.max_iters,
                ..TrainConfig::default()
            };
            run_baseline(&spec, &corpus, mode, &mcfg, &tcfg, &args.bm25.config(), &ecfg)?.result
        }
    };
    let csv = results_to_csv(std::slice::from_ref(&result));
    if let Some(path) = &args.out {
        fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{csv}");
    println!(
        "{} {} on {}: {:.4} over {} questions",
        result.baseline, result.metric, result.split, result.value, result.n
    );
    for (keep, acc) in &result.curve {
        println!("  keep {:>3.0}%: accuracy {:.4}", keep * 100.0, acc);
    }
    Ok(())
}

fn cmd_query(args: QueryArgs) -> anyhow::Result<()> {
    let model = TrainedModel::load(&args.model)?;
    let corpus = Corpus::load(&args.corpus)?;
    let cache = ProjectionCache::build(&corpus, &model);
    if cache.reviews(&args.product).is_none() {
        return Err(MoqaError::UnknownProduct(args.product.clone()).into());
    }
    let mut out = io::stdout().lock();
    match &args.question {
        Some(question) => answer_one(&mut out, question, &args, &model, &corpus, &cache)?,
        None => {
            for line in io::stdin().lock().lines() {
                let line = line.context("reading question from stdin")?;
                let question = line.trim();
                if question.is_empty() {
                    continue;
                }
                answer_one(&mut out, question, &args, &model, &corpus, &cache)?;
            }
        }
    }
    Ok(())
}

fn answer_one(
    out: &mut impl Write,
    question: &str,
    args: &QueryArgs,
    model: &TrainedModel,
    corpus: &Corpus,
    cache: &ProjectionCache,
) -> anyhow::Result<()> {
    let ranked = rank_opinions(question, &args.product, model, cache, args.top)?;
    let binary = model.config.mode == Mode::Binary;
    let p_yes = if binary {
        let q = model.prepare(question);
        let scored = score_product(&q, &args.product, model, cache)?;
        Some(binary_answer_prob(&scored.rel_probs, &scored.votes))
    } else {
        None
    };
    if args.json {
        let opinions: Vec<serde_json::Value> = ranked
            .iter()
            .map(|o| {
                serde_json::json!({
                    "doc": o.doc_index,
                    "relevance": o.relevance,
                    "vote": o.vote,
                    "text": corpus.docs()[o.doc_index].text,
                })
            })
            .collect();
        let mut record = serde_json::json!({
            "product": args.product,
            "question": question,
            "opinions": opinions,
        });
        if let Some(p) = p_yes {
            record["response"] = serde_json::json!({
                "answer": if p >= 0.5 { "yes" } else { "no" },
                "p_yes": p,
            });
        }
        writeln!(out, "{record}")?;
    } else {
        for (rank, o) in ranked.iter().enumerate() {
            let text = &corpus.docs()[o.doc_index].text;
            if binary {
                writeln!(
                    out,
                    "{}\t{:.3}\t{:+.3}\t{}",
                    rank + 1,
                    o.relevance,
                    o.vote,
                    text
                )?;
            } else {
                writeln!(out, "{}\t{:.3}\t{}", rank + 1, o.relevance, text)?;
            }
        }
        if let Some(p) = p_yes {
            let verdict = if p >= 0.5 { "yes" } else { "no" };
            writeln!(out, "Response: {verdict} (p={p:.3})")?;
        }
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<()> {
    let cfg = SynthConfig {
        products: args.products,
        reviews_per_product: args.reviews_per_product,
        train_questions: args.train_questions,
        valid_questions: args.valid_questions,
        test_questions: args.questions,
        vocab_size: args.vocab,
        mode: parse_mode(&args.mode)?,
        seed: args.seed,
        ..SynthConfig::default()
    };
    let (corpus, _) = generate(&cfg)?;
    corpus.save(&args.out)?;
    let splits = corpus.splits();
    println!(
        "generated {} reviews across {} products, {} questions ({} train / {} valid / {} test) -> {}",
        corpus.docs().len(),
        args.products,
        corpus.qa().len(),
        splits.train.len(),
        splits.valid.len(),
        splits.test.len(),
        args.out.display()
    );
    Ok(())
}
