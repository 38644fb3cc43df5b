//! Command-line front end. Every step reads and writes files under the
//! output directory:
//!
//! ```text
//! <out>/corpus/       ingested or synthetic corpora
//! <out>/checkpoints/  sentiment, valuation and summarizer checkpoints
//! <out>/candidates/   stage-II candidate stores
//! <out>/tables/       metric tables (CSV and JSON)
//! <out>/audit/        subsets, summaries and audit records
//! ```

use std::path::{Path, PathBuf};

use clap::error::{ContextKind, ContextValue, ErrorKind};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::config::{ConfigError, RunConfig};
use crate::corpus::{generate_synthetic, load_corpus, Corpus, CorpusError, Perspective, Split, Vocab};
use crate::eval::{self, AblationSpec, EvalError, MetricsTable, SharedModels};
use crate::pipeline::{
    self, gen_all_candidates, init_summarizer, prepare, read_jsonl, train_stage1, train_stage2, write_jsonl,
    CandidateSet, PipelineError,
};
use crate::sampling::{select, SamplingError, Strategy};
use crate::seed::derive_seed;
use crate::sentiment::{train_sentiment, SentimentError, SentimentModel};
use crate::summodel::SummarizerModel;
use crate::valuation::{train_valuation, ValuationError, ValuationScorer};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{message}")]
    Usage { flag: Option<String>, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Sentiment(#[from] SentimentError),
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage { .. } => "usage",
            CliError::Config(_) => "config",
            CliError::Corpus(_) => "corpus",
            CliError::Sentiment(_) => "sentiment",
            CliError::Valuation(_) => "valuation",
            CliError::Sampling(_) => "sampling",
            CliError::Checkpoint(_) => "checkpoint",
            CliError::Pipeline(_) => "pipeline",
            CliError::Eval(_) => "eval",
            CliError::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } => 2,
            _ => 1,
        }
    }

    /// Single-line JSON description of the error.
    pub fn to_json_line(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            error: &'a str,
            #[serde(skip_serializing_if = "Option::is_none")]
            flag: Option<&'a str>,
            message: String,
        }
        let flag = match self {
            CliError::Usage { flag, .. } => flag.as_deref(),
            _ => None,
        };
        let message = self.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
        serde_json::to_string(&Line {
            error: self.kind(),
            flag,
            message,
        })
        .expect("error line serializes")
    }
}

fn usage(flag: &str, message: impl Into<String>) -> CliError {
    CliError::Usage {
        flag: Some(flag.to_owned()),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Validate a JSONL corpus and copy it under <out>/corpus/.
    Ingest,
    /// Generate a synthetic corpus with planted key phrases.
    Synth,
    TrainSentiment,
    TrainValuation,
    /// Select review subsets and write them to <out>/audit/.
    Select,
    TrainStage1,
    GenCandidates,
    TrainStage2,
    Summarize,
    Evaluate,
    CompareStrategies,
    Ablate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Synth => "synth",
            Command::TrainSentiment => "train-sentiment",
            Command::TrainValuation => "train-valuation",
            Command::Select => "select",
            Command::TrainStage1 => "train-stage1",
            Command::GenCandidates => "gen-candidates",
            Command::TrainStage2 => "train-stage2",
            Command::Summarize => "summarize",
            Command::Evaluate => "evaluate",
            Command::CompareStrategies => "compare-strategies",
            Command::Ablate => "ablate",
        }
    }
}

#[derive(Debug, Clone, Args)]
struct Flags {
    /// JSON run config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Held-out corpus for compare-strategies and ablate.
    #[arg(long, global = true)]
    test_corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    split: Option<Split>,
    #[arg(long, global = true)]
    perspective: Option<Perspective>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Subset strategy for select, train-stage1 and summarize.
    #[arg(long, global = true)]
    strategy: Option<Strategy>,
    /// Comma-separated ablation flags: skip_stage1, skip_stage2,
    /// random_in_stage1, random_in_stage2, infer_<strategy>.
    #[arg(long, global = true)]
    ablation: Option<String>,
}

#[derive(Debug, Parser)]
#[command(name = "subsumm", version, about = "Review subset selection and two-stage summarizer training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

/// A parsed command line with the effective config.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: RunConfig,
    pub corpus: Option<PathBuf>,
    pub test_corpus: Option<PathBuf>,
    pub split: Split,
    pub perspective: Option<Perspective>,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub strategy: Option<Strategy>,
    pub ablation: AblationSpec,
}

fn clap_usage(e: clap::Error) -> CliError {
    let flag = match e.get(ContextKind::InvalidArg) {
        Some(ContextValue::String(s)) => Some(s.clone()),
        Some(ContextValue::Strings(v)) => v.first().cloned(),
        _ => None,
    };
    let message = e
        .render()
        .to_string()
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("invalid arguments")
        .trim_start_matches("error: ")
        .to_owned();
    CliError::Usage { flag, message }
}

fn parse_ablation(text: &str) -> Result<AblationSpec, CliError> {
    let mut spec = AblationSpec::default();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part {
            "full" => {}
            "skip_stage1" => spec.skip_stage1 = true,
            "skip_stage2" => spec.skip_stage2 = true,
            "random_in_stage1" => spec.random_in_stage1 = true,
            "random_in_stage2" => spec.random_in_stage2 = true,
            other => match other.strip_prefix("infer_").map(str::parse::<Strategy>) {
                Some(Ok(s)) => spec.strategy_for_inference = Some(s),
                _ => return Err(usage("--ablation", format!("unknown ablation flag '{other}'"))),
            },
        }
    }
    spec.validate()
        .map_err(|e| usage("--ablation", e.to_string()))?;
    Ok(spec)
}

pub fn parse_args<I, T>(argv: I) -> Result<Invocation, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(clap_usage)?;
    let f = cli.flags;
    let mut config = match &f.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = f.seed {
        config.seed = seed;
    }
    let ablation = match &f.ablation {
        Some(text) => parse_ablation(text)?,
        None => AblationSpec::default(),
    };
    let inv = Invocation {
        command: cli.command,
        config,
        corpus: f.corpus,
        test_corpus: f.test_corpus,
        split: f.split.unwrap_or(Split::Train),
        perspective: f.perspective,
        out: f.out.unwrap_or_else(|| PathBuf::from("out")),
        checkpoint: f.checkpoint,
        strategy: f.strategy,
        ablation,
    };
    let needs_corpus = !matches!(inv.command, Command::Synth);
    if needs_corpus && inv.corpus.is_none() {
        return Err(usage("--corpus", format!("{} requires --corpus", inv.command.name())));
    }
    if matches!(inv.command, Command::CompareStrategies | Command::Ablate) && inv.test_corpus.is_none() {
        return Err(usage("--test-corpus", format!("{} requires --test-corpus", inv.command.name())));
    }
    Ok(inv)
}

struct Layout<'a>(&'a Path);

impl Layout<'_> {
    fn checkpoints(&self) -> PathBuf {
        self.0.join("checkpoints")
    }
    fn sentiment(&self) -> PathBuf {
        self.checkpoints().join("sentiment.ckpt")
    }
    fn valuation(&self, p: Perspective) -> PathBuf {
        self.checkpoints().join(format!("valuation-{p}.ckpt"))
    }
    fn summarizer(&self, stage: u8, p: Perspective) -> PathBuf {
        self.checkpoints().join(format!("stage{stage}-{p}.ckpt"))
    }
    fn candidates(&self, split: Split, p: Perspective) -> PathBuf {
        self.0.join("candidates").join(format!("{}-{p}.jsonl", split.as_str()))
    }
    fn tables(&self) -> PathBuf {
        self.0.join("tables")
    }
    fn audit(&self, what: &str, split: Split, p: Perspective) -> PathBuf {
        self.0.join("audit").join(format!("{what}-{}-{p}.jsonl", split.as_str()))
    }
    fn corpus(&self, name: &str) -> PathBuf {
        self.0.join("corpus").join(name)
    }
}

impl Invocation {
    fn layout(&self) -> Layout<'_> {
        Layout(&self.out)
    }

    fn corpus(&self) -> Result<Corpus, CliError> {
        let path = self.corpus.as_ref().expect("checked at parse time");
        Ok(load_corpus(path, self.split)?)
    }

    fn test_corpus(&self) -> Result<Corpus, CliError> {
        let path = self.test_corpus.as_ref().expect("checked at parse time");
        Ok(load_corpus(path, Split::Test)?)
    }

    /// Requested perspective, or every perspective with a reference.
    fn perspectives(&self, corpus: &Corpus) -> Vec<Perspective> {
        match self.perspective {
            Some(p) => vec![p],
            None => Perspective::ALL
                .into_iter()
                .filter(|&p| corpus.with_reference(p).next().is_some())
                .collect(),
        }
    }

    fn load_sentiment(&self) -> Result<SentimentModel, CliError> {
        Ok(Checkpoint::load(self.layout().sentiment())?.into_sentiment()?)
    }

    fn load_valuation(&self, p: Perspective) -> Result<ValuationScorer, CliError> {
        let ckpt = Checkpoint::load(self.layout().valuation(p))?;
        ckpt.check_config_dims(&self.config)?;
        Ok(ckpt.into_valuation()?)
    }

    fn load_summarizer(&self, path: &Path) -> Result<(SummarizerModel, Vocab), CliError> {
        let ckpt = Checkpoint::load(path)?;
        ckpt.check_config_dims(&self.config)?;
        Ok(ckpt.into_summarizer()?)
    }

    fn summarizer_path(&self, stage: u8, p: Perspective) -> PathBuf {
        match (&self.checkpoint, self.perspective) {
            (Some(path), Some(_)) => path.clone(),
            _ => self.layout().summarizer(stage, p),
        }
    }
}

fn emit(line: serde_json::Value) {
    println!("{line}");
}

pub fn run(inv: &Invocation) -> Result<(), CliError> {
    let cfg = &inv.config;
    let layout = inv.layout();
    match inv.command {
        Command::Ingest => {
            let corpus = inv.corpus()?;
            let path = layout.corpus(&format!("{}.jsonl", inv.split.as_str()));
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            corpus.save(&path)?;
            emit(serde_json::json!({
                "command": "ingest",
                "entities": corpus.entities.len(),
                "reviews": corpus.review_count(),
                "path": path,
            }));
        }
        Command::Synth => {
            let mut gen = cfg.synth.clone();
            gen.split = inv.split;
            gen.entity_prefix = format!("{}-{}", gen.entity_prefix, inv.split.as_str());
            let seed = derive_seed(cfg.seed, "synth", inv.split.as_str(), 0);
            let synth = generate_synthetic(&gen, seed)?;
            let path = layout.corpus(&format!("{}.jsonl", inv.split.as_str()));
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            synth.corpus.save(&path)?;
            write_jsonl(layout.corpus(&format!("{}.oracle.jsonl", inv.split.as_str())), &synth.oracle)?;
            emit(serde_json::json!({"command": "synth", "entities": synth.corpus.entities.len(), "path": path}));
        }
        Command::TrainSentiment => {
            let corpus = inv.corpus()?;
            let (model, report) = train_sentiment(&corpus, &cfg.sentiment)?;
            Checkpoint::from_sentiment(&model, cfg).save(layout.sentiment())?;
            emit(serde_json::json!({"command": "train-sentiment", "epoch_losses": report.epoch_losses}));
        }
        Command::TrainValuation => {
            let corpus = inv.corpus()?;
            for p in inv.perspectives(&corpus) {
                let target = cfg.valuation.per_perspective.then_some(p);
                let (scorer, report) = train_valuation(&corpus, target, &cfg.valuation, cfg.lambda_val, cfg.seed)?;
                Checkpoint::from_valuation(&scorer, target, cfg).save(layout.valuation(p))?;
                emit(serde_json::json!({"command": "train-valuation", "perspective": p, "epoch_losses": report.epoch_losses}));
            }
        }
        Command::Select => {
            let corpus = inv.corpus()?;
            let sentiment = inv.load_sentiment()?;
            let vocab = Vocab::build(&corpus, 1)?;
            let strategy = inv.strategy.unwrap_or(cfg.strategies.inference);
            for p in inv.perspectives(&corpus) {
                let scorer = inv.load_valuation(p)?;
                let prepared = prepare(&corpus, &vocab, &sentiment, Some(&scorer), p, cfg)?;
                let subsets = prepared
                    .iter()
                    .map(|e| {
                        let seed = derive_seed(cfg.seed, "inference-subset", &e.entity_id, 0);
                        select(strategy, &e.input(), p, cfg.k, seed)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                write_jsonl(layout.audit("subsets", inv.split, p), &subsets)?;
            }
        }
        Command::TrainStage1 => {
            let corpus = inv.corpus()?;
            let sentiment = inv.load_sentiment()?;
            let vocab = Vocab::build(&corpus, cfg.min_freq)?;
            let strategy = inv.strategy.unwrap_or(cfg.strategies.stage1);
            for p in inv.perspectives(&corpus) {
                let scorer = match strategy {
                    Strategy::SentimentInfo | Strategy::SentimentInfoWeighted => Some(inv.load_valuation(p)?),
                    _ => None,
                };
                let prepared = prepare(&corpus, &vocab, &sentiment, scorer.as_ref(), p, cfg)?;
                let init = init_summarizer(&vocab, p, cfg);
                let (model, report) = train_stage1(init, &prepared, p, strategy, cfg)?;
                Checkpoint::from_summarizer(&model, &vocab, p, 1, cfg).save(layout.summarizer(1, p))?;
                emit(serde_json::json!({"command": "train-stage1", "perspective": p, "epoch_losses": report.epoch_losses}));
            }
        }
        Command::GenCandidates => {
            let corpus = inv.corpus()?;
            let sentiment = inv.load_sentiment()?;
            for p in inv.perspectives(&corpus) {
                let (model, vocab) = inv.load_summarizer(&inv.summarizer_path(1, p))?;
                let scorer = inv.load_valuation(p)?;
                let prepared = prepare(&corpus, &vocab, &sentiment, Some(&scorer), p, cfg)?;
                let sets = gen_all_candidates(&model, &vocab, &prepared, p, cfg)?;
                write_jsonl(layout.candidates(inv.split, p), &sets)?;
                emit(serde_json::json!({"command": "gen-candidates", "perspective": p, "entities": sets.len()}));
            }
        }
        Command::TrainStage2 => {
            let corpus = inv.corpus()?;
            let sentiment = inv.load_sentiment()?;
            for p in inv.perspectives(&corpus) {
                let (model, vocab) = inv.load_summarizer(&inv.summarizer_path(1, p))?;
                let scorer = inv.load_valuation(p)?;
                let sets: Vec<CandidateSet> = read_jsonl(layout.candidates(inv.split, p))?;
                let prepared = prepare(&corpus, &vocab, &sentiment, Some(&scorer), p, cfg)?;
                let (model, report) = train_stage2(model, &vocab, &prepared, &sets, p, cfg)?;
                Checkpoint::from_summarizer(&model, &vocab, p, 2, cfg).save(layout.summarizer(2, p))?;
                emit(serde_json::json!({"command": "train-stage2", "perspective": p, "epoch_losses": report.epoch_losses}));
            }
        }
        Command::Summarize => {
            let corpus = inv.corpus()?;
            let sentiment = inv.load_sentiment()?;
            let strategy = inv.strategy.unwrap_or(cfg.strategies.inference);
            for p in inv.perspectives(&corpus) {
                let (summarizer, vocab) = inv.load_summarizer(&inv.summarizer_path(2, p))?;
                let bundle = pipeline::ModelBundle {
                    vocab,
                    sentiment: sentiment.clone(),
                    scorer: inv.load_valuation(p)?,
                    summarizer,
                };
                let audits = corpus
                    .entities
                    .iter()
                    .map(|e| pipeline::infer(&bundle, e, p, strategy, cfg))
                    .collect::<Result<Vec<_>, _>>()?;
                let summaries: Vec<_> = audits.iter().map(|a| a.summary()).collect();
                write_jsonl(layout.audit("summaries", inv.split, p), &summaries)?;
                write_jsonl(layout.audit("audit", inv.split, p), &audits)?;
            }
        }
        Command::Evaluate => {
            let corpus = inv.corpus()?;
            let sentiment = inv.load_sentiment()?;
            let mut table = MetricsTable::default();
            for p in inv.perspectives(&corpus) {
                let (model, vocab) = inv.load_summarizer(&inv.summarizer_path(2, p))?;
                let shared = SharedModels {
                    vocab,
                    sentiment: sentiment.clone(),
                    scorers: [(p, inv.load_valuation(p)?)].into(),
                };
                let strategy = inv.strategy.unwrap_or(cfg.strategies.inference);
                table
                    .rows
                    .push(eval::evaluate(&shared, &model, &corpus, p, strategy, "system", cfg)?);
            }
            table.write(layout.tables(), &format!("evaluate-{}", inv.split.as_str()))?;
            print!("{}", table.to_csv()?);
        }
        Command::CompareStrategies => {
            let train = inv.corpus()?;
            let test = inv.test_corpus()?;
            let perspectives = inv.perspectives(&train);
            let shared = eval::train_shared(&train, &perspectives, cfg)?;
            let table = eval::compare_strategies(&shared, &train, &test, &perspectives, cfg)?;
            table.write(layout.tables(), "compare_strategies")?;
            print!("{}", table.to_csv()?);
        }
        Command::Ablate => {
            let train = inv.corpus()?;
            let test = inv.test_corpus()?;
            let perspectives = inv.perspectives(&train);
            let shared = eval::train_shared(&train, &perspectives, cfg)?;
            let table = eval::run_ablation(&inv.ablation, &shared, &train, &test, &perspectives, cfg)?;
            table.write(layout.tables(), &format!("ablation-{}", inv.ablation.name()))?;
            print!("{}", table.to_csv()?);
        }
    }
    Ok(())
}

/// Caps worker threads at `SUBSEL_THREADS` when set.
pub fn init_threads() -> Result<(), CliError> {
    if let Ok(value) = std::env::var("SUBSEL_THREADS") {
        let n: usize = value
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| usage("SUBSEL_THREADS", format!("SUBSEL_THREADS must be a positive integer, got '{value}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage("SUBSEL_THREADS", e.to_string()))?;
    }
    Ok(())
}

/// Runs the process; returns the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let wants_help = argv
        .iter()
        .any(|a| a == "--help" || a == "-h" || a == "--version" || a == "-V" || a == "help");
    if wants_help {
        if let Err(e) = Cli::try_parse_from(&argv) {
            let _ = e.print();
            return if e.kind() == ErrorKind::DisplayHelp || e.kind() == ErrorKind::DisplayVersion {
                0
            } else {
                2
            };
        }
    }
    let result = init_threads().and_then(|_| parse_args(argv)).and_then(|inv| run(&inv));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            e.exit_code()
        }
    }
}
