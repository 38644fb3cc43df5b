//! Two-stage training and inference: stage I (MLE on re-sampled subsets),
//! candidate generation, stage II (MLE plus candidate ranking on the
//! deterministic optimal subset) and subset-conditioned summarization.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::CheckpointError;
use crate::config::{RunConfig, StageSettings};
use crate::corpus::{Corpus, CorpusError, Entity, Perspective, TokenId, Vocab};
use crate::ranking::Ranking;
use crate::rouge::rouge_mean;
use crate::sampling::{quota_for, select, Quota, SamplingError, SelectionInput, Strategy, Subset};
use crate::seed::derive_seed;
use crate::sentiment::{check_classes, predict_sentiment, Polarity, SentimentError, SentimentModel, SentimentTag};
use crate::summodel::{
    beam_search, decode_with_fallback, length_norm_lik, scored_length, Example, LossValue, LossWeights, ModelDims,
    ModelError, SummarizerModel,
};
use crate::valuation::{ValuationError, ValuationScorer};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no entity has a {0} reference")]
    NoReferenceForPerspective(Perspective),
    #[error("no entity has at least two {0} candidates")]
    NoCandidates(Perspective),
    #[error("entity {0} has no reviews")]
    EmptyEntity(String),
    #[error("candidate store lacks entity {0}")]
    MissingCandidates(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Sentiment(#[from] SentimentError),
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Per-entity inputs shared by every stage: encoded reviews and reference,
/// sentiment tags and information scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub entity_id: String,
    pub reviews: Vec<Vec<TokenId>>,
    pub reference: Option<Vec<TokenId>>,
    pub reference_tokens: Option<Vec<String>>,
    pub tags: Vec<SentimentTag>,
    pub polarities: Vec<Polarity>,
    /// Empty when no valuation scorer was supplied.
    pub corr: Vec<f64>,
}

impl Prepared {
    pub fn input(&self) -> SelectionInput<'_> {
        SelectionInput {
            entity_id: &self.entity_id,
            polarities: &self.polarities,
            corr: &self.corr,
        }
    }

    pub fn subset_reviews(&self, ids: &[usize]) -> Vec<Vec<TokenId>> {
        ids.iter().map(|&i| self.reviews[i].clone()).collect()
    }
}

pub fn prepare_entity(
    entity: &Entity,
    vocab: &Vocab,
    sentiment: &SentimentModel,
    scorer: Option<&ValuationScorer>,
    perspective: Perspective,
    cfg: &RunConfig,
) -> Result<Prepared> {
    if entity.reviews.is_empty() {
        return Err(PipelineError::EmptyEntity(entity.entity_id.clone()));
    }
    let tags: Vec<SentimentTag> = entity
        .reviews
        .iter()
        .map(|r| predict_sentiment(sentiment, r, cfg.sentiment.polarity))
        .collect();
    let corr = match scorer {
        Some(s) if entity.reviews.len() >= 2 => s.corr_for_entity(entity)?,
        Some(_) => vec![0.0; entity.reviews.len()],
        None => Vec::new(),
    };
    let reference_tokens = entity.reference(perspective).map(<[String]>::to_vec);
    Ok(Prepared {
        entity_id: entity.entity_id.clone(),
        reviews: entity.reviews.iter().map(|r| vocab.encode(&r.tokens)).collect(),
        reference: reference_tokens.as_deref().map(|t| vocab.encode(t)),
        reference_tokens,
        polarities: tags.iter().map(|t| t.polarity).collect(),
        tags,
        corr,
    })
}

/// Prepares every entity of the corpus, in corpus order.
pub fn prepare(
    corpus: &Corpus,
    vocab: &Vocab,
    sentiment: &SentimentModel,
    scorer: Option<&ValuationScorer>,
    perspective: Perspective,
    cfg: &RunConfig,
) -> Result<Vec<Prepared>> {
    check_classes(sentiment, corpus)?;
    corpus
        .entities
        .par_iter()
        .map(|e| prepare_entity(e, vocab, sentiment, scorer, perspective, cfg))
        .collect()
}

pub fn model_dims(vocab: &Vocab, cfg: &RunConfig) -> ModelDims {
    ModelDims {
        vocab: vocab.len(),
        embed: cfg.model.embed,
        ctx: cfg.model.ctx,
        hidden: cfg.model.hidden,
    }
}

pub fn init_summarizer(vocab: &Vocab, perspective: Perspective, cfg: &RunConfig) -> SummarizerModel {
    SummarizerModel::init_with_gain(
        model_dims(vocab, cfg),
        cfg.model.init_scale,
        cfg.model.ctx_gain,
        derive_seed(cfg.seed, "summarizer-init", perspective.as_str(), 0),
    )
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    /// Mean per-entity objective over each epoch.
    pub epoch_losses: Vec<f64>,
    /// Entities that took part in training.
    pub entities: usize,
}

struct OwnedExample {
    reviews: Vec<Vec<TokenId>>,
    reference: Vec<TokenId>,
    candidates: Vec<Vec<TokenId>>,
    ranking: Option<Ranking>,
}

impl OwnedExample {
    fn view(&self) -> Example<'_> {
        Example {
            reviews: &self.reviews,
            reference: &self.reference,
            candidates: &self.candidates,
            ranking: self.ranking.as_ref(),
        }
    }
}

/// Mini-batch gradient descent. Gradients of a batch are computed in
/// parallel and summed in item order, so results do not depend on the
/// thread count.
fn train_loop<F>(
    model: &mut SummarizerModel,
    items: usize,
    stage: &StageSettings,
    weights: &LossWeights,
    label: &str,
    example_for: F,
) -> Result<Vec<f64>>
where
    F: Fn(usize, usize) -> Result<OwnedExample> + Sync,
{
    let order: Vec<usize> = (0..items).collect();
    let mut losses = Vec::with_capacity(stage.epochs);
    for epoch in 0..stage.epochs {
        let mut total = 0.0;
        for chunk in order.chunks(stage.batch_size.max(1)) {
            let shared: &SummarizerModel = model;
            let results: Vec<Result<(LossValue, Vec<f64>)>> = chunk
                .par_iter()
                .map(|&i| {
                    let ex = example_for(epoch, i)?;
                    Ok(shared.loss_and_grad(&ex.view(), weights)?)
                })
                .collect();
            let mut grad = vec![0.0; model.params().len()];
            for r in results {
                let (loss, g) = r?;
                total += loss.total;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            let scale = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            model.apply_gradient(&grad, stage.learning_rate, stage.clip);
        }
        let mean = if items > 0 { total / items as f64 } else { 0.0 };
        log::info!("{label} epoch {} loss {:.6}", epoch + 1, mean);
        losses.push(mean);
    }
    Ok(losses)
}

fn with_reference(prepared: &[Prepared]) -> Vec<&Prepared> {
    prepared
        .iter()
        .filter(|p| p.reference.as_ref().is_some_and(|r| !r.is_empty()))
        .collect()
}

/// Stage I: maximum likelihood on a subset re-drawn every epoch with
/// `strategy` (sentiment-random by default).
pub fn train_stage1(
    init: SummarizerModel,
    prepared: &[Prepared],
    perspective: Perspective,
    strategy: Strategy,
    cfg: &RunConfig,
) -> Result<(SummarizerModel, StageReport)> {
    let items = with_reference(prepared);
    if items.is_empty() {
        return Err(PipelineError::NoReferenceForPerspective(perspective));
    }
    let mut model = init;
    let losses = train_loop(
        &mut model,
        items.len(),
        &cfg.stage1,
        &LossWeights::xent_only(),
        "stage1",
        |epoch, i| {
            let p = items[i];
            let seed = stage1_seed(cfg.seed, &p.entity_id, epoch);
            let subset = select(strategy, &p.input(), perspective, cfg.k, seed)?;
            Ok(OwnedExample {
                reviews: p.subset_reviews(&subset.review_ids),
                reference: p.reference.clone().unwrap_or_default(),
                candidates: Vec::new(),
                ranking: None,
            })
        },
    )?;
    Ok((
        model,
        StageReport {
            epoch_losses: losses,
            entities: items.len(),
        },
    ))
}

/// Seed of the stage-I subset of `entity_id` at `epoch`.
pub fn stage1_seed(master: u64, entity_id: &str, epoch: usize) -> u64 {
    derive_seed(master, "stage1-subset", entity_id, epoch as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub tokens: Vec<String>,
    pub rouge_mean: f64,
    pub subset_ids: Vec<usize>,
    pub seed: u64,
    /// Log-likelihood under the generating model, EOS included.
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub entity_id: String,
    pub candidates: Vec<Candidate>,
}

/// Decodes `cfg.m` candidates, each from its own subset drawn with the
/// candidate strategy. Candidates whose decode fails are dropped.
pub fn gen_candidates(
    model: &SummarizerModel,
    vocab: &Vocab,
    prepared: &Prepared,
    perspective: Perspective,
    cfg: &RunConfig,
) -> Result<CandidateSet> {
    let decode = cfg.decode.for_perspective(perspective);
    let mut candidates = Vec::with_capacity(cfg.m);
    for m in 0..cfg.m {
        let seed = derive_seed(cfg.seed, "candidate-subset", &prepared.entity_id, m as u64);
        let subset = select(cfg.strategies.candidates, &prepared.input(), perspective, cfg.k, seed)?;
        match beam_search(model, &prepared.subset_reviews(&subset.review_ids), &decode) {
            Ok(hyp) => {
                let tokens = vocab.decode(&hyp.tokens);
                let rouge = prepared
                    .reference_tokens
                    .as_deref()
                    .map_or(0.0, |r| rouge_mean(&tokens, r));
                candidates.push(Candidate {
                    tokens,
                    rouge_mean: rouge,
                    subset_ids: subset.review_ids,
                    seed,
                    loglik: hyp.loglik,
                });
            }
            Err(ModelError::DecodeFailure) => {
                log::warn!("{}: candidate {m} dropped, decode failed", prepared.entity_id);
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(CandidateSet {
        entity_id: prepared.entity_id.clone(),
        candidates,
    })
}

/// Candidates for every entity with a reference, in corpus order.
pub fn gen_all_candidates(
    model: &SummarizerModel,
    vocab: &Vocab,
    prepared: &[Prepared],
    perspective: Perspective,
    cfg: &RunConfig,
) -> Result<Vec<CandidateSet>> {
    with_reference(prepared)
        .into_par_iter()
        .map(|p| gen_candidates(model, vocab, p, perspective, cfg))
        .collect()
}

/// Stage II: cross entropy on the optimal subset plus the ranking loss over
/// the entity's fixed candidates. Entities with fewer than two candidates
/// or a reference shorter than two tokens are skipped.
pub fn train_stage2(
    stage1: SummarizerModel,
    vocab: &Vocab,
    prepared: &[Prepared],
    candidates: &[CandidateSet],
    perspective: Perspective,
    cfg: &RunConfig,
) -> Result<(SummarizerModel, StageReport)> {
    let by_id: BTreeMap<&str, &CandidateSet> = candidates.iter().map(|c| (c.entity_id.as_str(), c)).collect();
    let mut items = Vec::new();
    for p in with_reference(prepared) {
        let Some(set) = by_id.get(p.entity_id.as_str()) else {
            log::warn!("{}: no candidates, skipped in stage 2", p.entity_id);
            continue;
        };
        if set.candidates.len() < 2 || p.reference.as_ref().map_or(0, Vec::len) < 2 {
            log::warn!("{}: too few candidates or reference tokens, skipped in stage 2", p.entity_id);
            continue;
        }
        let encoded: Vec<Vec<TokenId>> = set.candidates.iter().map(|c| vocab.encode(&c.tokens)).collect();
        let ranking = Ranking::from_scores(set.candidates.iter().map(|c| c.rouge_mean).collect());
        items.push((p, encoded, ranking));
    }
    if items.is_empty() {
        return Err(PipelineError::NoCandidates(perspective));
    }
    let weights = LossWeights::multitask(cfg.gamma.get(perspective), cfg.lambda_ctr, cfg.alpha);
    let strategy = cfg.strategies.stage2;
    let mut model = stage1;
    let losses = train_loop(&mut model, items.len(), &cfg.stage2, &weights, "stage2", |epoch, i| {
        let (p, cands, ranking) = &items[i];
        let seed = derive_seed(cfg.seed, "stage2-subset", &p.entity_id, epoch as u64);
        let subset = select(strategy, &p.input(), perspective, cfg.k, seed)?;
        Ok(OwnedExample {
            reviews: p.subset_reviews(&subset.review_ids),
            reference: p.reference.clone().unwrap_or_default(),
            candidates: cands.clone(),
            ranking: Some(ranking.clone()),
        })
    })?;
    Ok((
        model,
        StageReport {
            epoch_losses: losses,
            entities: items.len(),
        },
    ))
}

/// Everything needed to summarize one perspective.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub vocab: Vocab,
    pub sentiment: SentimentModel,
    pub scorer: ValuationScorer,
    pub summarizer: SummarizerModel,
}

/// Line of the summaries file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub entity_id: String,
    pub perspective: Perspective,
    pub summary: String,
    pub subset_ids: Vec<usize>,
    pub lh: f64,
}

/// Every intermediate value behind one summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub entity_id: String,
    pub perspective: Perspective,
    pub strategy: Strategy,
    pub seed: Option<u64>,
    pub classes: Vec<u32>,
    pub distributions: Vec<Vec<f64>>,
    pub polarities: Vec<Polarity>,
    pub corr: Vec<f64>,
    pub quota: Option<Quota>,
    pub subset_ids: Vec<usize>,
    pub summary_tokens: Vec<String>,
    pub loglik: f64,
    pub lh: f64,
    /// Decoding had to be retried without trigram blocking.
    pub fallback: bool,
}

impl AuditRecord {
    pub fn summary(&self) -> SummaryRecord {
        SummaryRecord {
            entity_id: self.entity_id.clone(),
            perspective: self.perspective,
            summary: self.summary_tokens.join(" "),
            subset_ids: self.subset_ids.clone(),
            lh: self.lh,
        }
    }
}

/// Selects the subset for `prepared` with `strategy` and decodes a summary.
pub fn infer_prepared(
    model: &SummarizerModel,
    vocab: &Vocab,
    prepared: &Prepared,
    perspective: Perspective,
    strategy: Strategy,
    cfg: &RunConfig,
) -> Result<AuditRecord> {
    let seed = strategy
        .is_stochastic()
        .then(|| derive_seed(cfg.seed, "inference-subset", &prepared.entity_id, 0));
    let subset: Subset = select(strategy, &prepared.input(), perspective, cfg.k, seed.unwrap_or(0))?;
    let quota = match strategy {
        Strategy::Random => None,
        _ => Some(quota_for(perspective, cfg.k, &prepared.polarities)?),
    };
    let decode = cfg.decode.for_perspective(perspective);
    let (hyp, fallback) = decode_with_fallback(model, &prepared.subset_reviews(&subset.review_ids), &decode)?;
    if fallback {
        log::warn!("{}: decoded without trigram blocking", prepared.entity_id);
    }
    Ok(AuditRecord {
        entity_id: prepared.entity_id.clone(),
        perspective,
        strategy,
        seed,
        classes: prepared.tags.iter().map(|t| t.class).collect(),
        distributions: prepared.tags.iter().map(|t| t.distribution.clone()).collect(),
        polarities: prepared.polarities.clone(),
        corr: prepared.corr.clone(),
        quota,
        subset_ids: subset.review_ids,
        summary_tokens: vocab.decode(&hyp.tokens),
        loglik: hyp.loglik,
        lh: length_norm_lik(hyp.loglik, scored_length(&hyp.tokens), cfg.alpha),
        fallback,
    })
}

/// End-to-end summary of one entity: tags, information scores, quota,
/// selection and decoding.
pub fn infer(
    bundle: &ModelBundle,
    entity: &Entity,
    perspective: Perspective,
    strategy: Strategy,
    cfg: &RunConfig,
) -> Result<AuditRecord> {
    let prepared = prepare_entity(
        entity,
        &bundle.vocab,
        &bundle.sentiment,
        Some(&bundle.scorer),
        perspective,
        cfg,
    )?;
    infer_prepared(&bundle.summarizer, &bundle.vocab, &prepared, perspective, strategy, cfg)
}

/// Length-normalized likelihood of each stored candidate under `model`,
/// conditioned on the entity's inference subset.
pub fn candidate_lh(
    model: &SummarizerModel,
    vocab: &Vocab,
    prepared: &Prepared,
    set: &CandidateSet,
    perspective: Perspective,
    cfg: &RunConfig,
) -> Result<Vec<f64>> {
    let subset = select(cfg.strategies.stage2, &prepared.input(), perspective, cfg.k, 0)?;
    let ctx = model.encode_input(&prepared.subset_reviews(&subset.review_ids))?;
    let encoded: Vec<Vec<TokenId>> = set.candidates.iter().map(|c| vocab.encode(&c.tokens)).collect();
    Ok(model.candidate_lh(&ctx, &encoded, cfg.alpha)?)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|source| PipelineError::Json {
            path: path.display().to_string(),
            source,
        })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut items = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(|source| PipelineError::Json {
            path: path.display().to_string(),
            source,
        })?);
    }
    Ok(items)
}
