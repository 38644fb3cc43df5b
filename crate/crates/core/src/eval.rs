//! ROUGE tables over a test split, the strategy comparison and ablations.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::corpus::{Corpus, Entity, Perspective, Vocab};
use crate::pipeline::{
    self, gen_all_candidates, infer_prepared, init_summarizer, prepare, train_stage1, train_stage2, CandidateSet,
    PipelineError, StageReport,
};
use crate::rouge::rouge;
use crate::sampling::Strategy;
use crate::sentiment::{train_sentiment, SentimentModel};
use crate::summodel::SummarizerModel;
use crate::valuation::{train_valuation, ValuationScorer};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no test entity has a {0} reference")]
    EmptySplit(Perspective),
    #[error("invalid ablation: {0}")]
    InvalidAblation(&'static str),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

impl From<crate::sentiment::SentimentError> for EvalError {
    fn from(e: crate::sentiment::SentimentError) -> Self {
        EvalError::Pipeline(e.into())
    }
}

impl From<crate::valuation::ValuationError> for EvalError {
    fn from(e: crate::valuation::ValuationError) -> Self {
        EvalError::Pipeline(e.into())
    }
}

impl From<crate::corpus::CorpusError> for EvalError {
    fn from(e: crate::corpus::CorpusError) -> Self {
        EvalError::Pipeline(e.into())
    }
}

/// One table row. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: String,
    pub perspective: Perspective,
    pub n: usize,
    pub r1: f64,
    pub r2: f64,
    pub rl: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn row(&self, variant: &str, perspective: Perspective) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.perspective == perspective)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record(["variant", "perspective", "n", "r1", "r2", "rl"])?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.rows).expect("rows serialize") + "\n"
    }

    /// Writes `<name>.csv` and `<name>.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, name: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{name}.csv")), self.to_csv()?)?;
        std::fs::write(dir.join(format!("{name}.json")), self.to_json())?;
        Ok(())
    }
}

/// Macro-averaged ROUGE F1 of `summarize` against the references of every
/// entity that has one.
pub fn evaluate_with<F>(corpus: &Corpus, perspective: Perspective, variant: &str, summarize: F) -> Result<MetricsRow>
where
    F: Fn(usize, &Entity) -> Result<Vec<String>> + Sync,
{
    let scored: Vec<(f64, f64, f64)> = corpus
        .entities
        .par_iter()
        .enumerate()
        .filter_map(|(i, e)| e.reference(perspective).map(|r| (i, e, r)))
        .map(|(i, e, reference)| {
            let summary = summarize(i, e)?;
            let s = rouge(&summary, reference);
            Ok((s.r1.f1, s.r2.f1, s.rl.f1))
        })
        .collect::<Result<_>>()?;
    if scored.is_empty() {
        return Err(EvalError::EmptySplit(perspective));
    }
    let n = scored.len() as f64;
    let mean = |f: fn(&(f64, f64, f64)) -> f64| scored.iter().map(f).sum::<f64>() / n;
    Ok(MetricsRow {
        variant: variant.to_owned(),
        perspective,
        n: scored.len(),
        r1: mean(|s| s.0),
        r2: mean(|s| s.1),
        rl: mean(|s| s.2),
    })
}

/// Vocabulary, sentiment model and valuation scorers shared by every
/// summarizer variant.
#[derive(Debug, Clone)]
pub struct SharedModels {
    pub vocab: Vocab,
    pub sentiment: SentimentModel,
    pub scorers: BTreeMap<Perspective, ValuationScorer>,
}

impl SharedModels {
    pub fn scorer(&self, perspective: Perspective) -> &ValuationScorer {
        &self.scorers[&perspective]
    }
}

pub fn train_shared(corpus: &Corpus, perspectives: &[Perspective], cfg: &RunConfig) -> Result<SharedModels> {
    let vocab = Vocab::build(corpus, cfg.min_freq)?;
    let (sentiment, _) = train_sentiment(corpus, &cfg.sentiment)?;
    let mut scorers = BTreeMap::new();
    if cfg.valuation.per_perspective {
        for &p in perspectives {
            let (s, _) = train_valuation(corpus, Some(p), &cfg.valuation, cfg.lambda_val, cfg.seed)?;
            scorers.insert(p, s);
        }
    } else {
        let (s, _) = train_valuation(corpus, None, &cfg.valuation, cfg.lambda_val, cfg.seed)?;
        for &p in perspectives {
            scorers.insert(p, s.clone());
        }
    }
    Ok(SharedModels {
        vocab,
        sentiment,
        scorers,
    })
}

/// Which parts of the two-stage pipeline to change.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationSpec {
    pub skip_stage1: bool,
    pub skip_stage2: bool,
    pub random_in_stage1: bool,
    pub random_in_stage2: bool,
    pub strategy_for_inference: Option<Strategy>,
}

impl AblationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.skip_stage1 && self.skip_stage2 {
            return Err(EvalError::InvalidAblation("skip_stage1 and skip_stage2 are exclusive"));
        }
        Ok(())
    }

    /// Short variant label, `full` when nothing is changed.
    pub fn name(&self) -> String {
        let mut parts = Vec::new();
        if self.skip_stage1 {
            parts.push("wo_stage1".to_owned());
        }
        if self.skip_stage2 {
            parts.push("wo_stage2".to_owned());
        }
        if self.random_in_stage1 {
            parts.push("rand_stage1".to_owned());
        }
        if self.random_in_stage2 {
            parts.push("rand_stage2".to_owned());
        }
        if let Some(s) = self.strategy_for_inference {
            parts.push(format!("infer_{s}"));
        }
        if parts.is_empty() {
            "full".to_owned()
        } else {
            parts.join("+")
        }
    }

    pub fn apply(&self, cfg: &RunConfig) -> RunConfig {
        let mut cfg = cfg.clone();
        if self.random_in_stage1 {
            cfg.strategies.stage1 = Strategy::Random;
        }
        if self.random_in_stage2 {
            cfg.strategies.stage2 = Strategy::Random;
            cfg.strategies.candidates = Strategy::Random;
        }
        if let Some(s) = self.strategy_for_inference {
            cfg.strategies.inference = s;
        }
        cfg
    }
}

/// Models and reports of one trained perspective.
#[derive(Debug, Clone)]
pub struct TrainedPerspective {
    pub perspective: Perspective,
    pub stage1: SummarizerModel,
    pub stage1_report: StageReport,
    pub candidates: Vec<CandidateSet>,
    pub stage2: Option<SummarizerModel>,
    pub stage2_report: Option<StageReport>,
}

impl TrainedPerspective {
    /// The model used for inference: stage II when it was trained.
    pub fn final_model(&self) -> &SummarizerModel {
        self.stage2.as_ref().unwrap_or(&self.stage1)
    }
}

/// Runs stage I, candidate generation and stage II for one perspective
/// under `spec` (the spec's strategy changes must already be in `cfg`).
pub fn train_perspective(
    shared: &SharedModels,
    train: &Corpus,
    perspective: Perspective,
    spec: &AblationSpec,
    cfg: &RunConfig,
) -> Result<TrainedPerspective> {
    spec.validate()?;
    let prepared = prepare(
        train,
        &shared.vocab,
        &shared.sentiment,
        Some(shared.scorer(perspective)),
        perspective,
        cfg,
    )?;
    let init = init_summarizer(&shared.vocab, perspective, cfg);
    let (stage1, stage1_report) = if spec.skip_stage1 {
        (init, StageReport::default())
    } else {
        train_stage1(init, &prepared, perspective, cfg.strategies.stage1, cfg)?
    };
    let (candidates, stage2, stage2_report) = if spec.skip_stage2 {
        (Vec::new(), None, None)
    } else {
        let candidates = gen_all_candidates(&stage1, &shared.vocab, &prepared, perspective, cfg)?;
        let (m, r) = train_stage2(stage1.clone(), &shared.vocab, &prepared, &candidates, perspective, cfg)?;
        (candidates, Some(m), Some(r))
    };
    Ok(TrainedPerspective {
        perspective,
        stage1,
        stage1_report,
        candidates,
        stage2,
        stage2_report,
    })
}

/// Scores `model` on `test` with subsets chosen by `strategy`.
pub fn evaluate(
    shared: &SharedModels,
    model: &SummarizerModel,
    test: &Corpus,
    perspective: Perspective,
    strategy: Strategy,
    variant: &str,
    cfg: &RunConfig,
) -> Result<MetricsRow> {
    let prepared = prepare(
        test,
        &shared.vocab,
        &shared.sentiment,
        Some(shared.scorer(perspective)),
        perspective,
        cfg,
    )?;
    evaluate_with(test, perspective, variant, |i, _| {
        let audit = infer_prepared(model, &shared.vocab, &prepared[i], perspective, strategy, cfg)?;
        Ok(audit.summary_tokens)
    })
}

/// Trains the variant described by `spec` and evaluates it on `test`.
pub fn run_ablation(
    spec: &AblationSpec,
    shared: &SharedModels,
    train: &Corpus,
    test: &Corpus,
    perspectives: &[Perspective],
    cfg: &RunConfig,
) -> Result<MetricsTable> {
    spec.validate()?;
    let cfg = spec.apply(cfg);
    let mut table = MetricsTable::default();
    for &p in perspectives {
        let trained = train_perspective(shared, train, p, spec, &cfg)?;
        table.rows.push(evaluate(
            shared,
            trained.final_model(),
            test,
            p,
            cfg.strategies.inference,
            &spec.name(),
            &cfg,
        )?);
    }
    Ok(table)
}

pub const STRATEGY_VARIANTS: [&str; 4] = ["rand", "senti_rand", "senti_info", "senti_rand_info"];

/// Stage-I models trained with each strategy, evaluated with the same
/// strategy, plus the sentiment-random model evaluated on
/// sentiment-information subsets.
pub fn compare_strategies(
    shared: &SharedModels,
    train: &Corpus,
    test: &Corpus,
    perspectives: &[Perspective],
    cfg: &RunConfig,
) -> Result<MetricsTable> {
    let mut table = MetricsTable::default();
    for &p in perspectives {
        let prepared = prepare(
            train,
            &shared.vocab,
            &shared.sentiment,
            Some(shared.scorer(p)),
            p,
            cfg,
        )?;
        let mut models = BTreeMap::new();
        for strategy in [Strategy::Random, Strategy::SentimentRandom, Strategy::SentimentInfo] {
            let init = init_summarizer(&shared.vocab, p, cfg);
            let (m, _) = train_stage1(init, &prepared, p, strategy, cfg)?;
            models.insert(strategy, m);
        }
        let runs = [
            ("rand", Strategy::Random, Strategy::Random),
            ("senti_rand", Strategy::SentimentRandom, Strategy::SentimentRandom),
            ("senti_info", Strategy::SentimentInfo, Strategy::SentimentInfo),
            ("senti_rand_info", Strategy::SentimentRandom, Strategy::SentimentInfo),
        ];
        for (name, trained_with, infer_with) in runs {
            table
                .rows
                .push(evaluate(shared, &models[&trained_with], test, p, infer_with, name, cfg)?);
        }
    }
    Ok(table)
}

/// Fraction of candidate pairs with different ROUGE where the better
/// candidate also has the higher length-normalized likelihood under
/// `model`, averaged over entities.
pub fn candidate_ranking_accuracy(
    model: &SummarizerModel,
    shared: &SharedModels,
    corpus: &Corpus,
    candidates: &[CandidateSet],
    perspective: Perspective,
    cfg: &RunConfig,
) -> Result<Option<f64>> {
    let prepared = prepare(
        corpus,
        &shared.vocab,
        &shared.sentiment,
        Some(shared.scorer(perspective)),
        perspective,
        cfg,
    )?;
    let by_id: BTreeMap<&str, &pipeline::Prepared> = prepared.iter().map(|p| (p.entity_id.as_str(), p)).collect();
    let accs: Vec<Option<f64>> = candidates
        .par_iter()
        .map(|set| {
            let p = by_id
                .get(set.entity_id.as_str())
                .ok_or_else(|| PipelineError::MissingCandidates(set.entity_id.clone()))?;
            let lh = pipeline::candidate_lh(model, &shared.vocab, p, set, perspective, cfg)?;
            let ranking = crate::ranking::Ranking::from_scores(set.candidates.iter().map(|c| c.rouge_mean).collect());
            Ok(crate::ranking::pairwise_accuracy(&lh, &ranking))
        })
        .collect::<Result<_>>()?;
    let scored: Vec<f64> = accs.into_iter().flatten().collect();
    Ok((!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64))
}
