//! Contrastive information valuation.
//!
//! Each review is embedded as `h = P x` where `x` is its hashed feature
//! vector and `P` a trainable projection. A review's information value is
//! its leave-one-out correlation with the rest of the review set,
//!
//! ```text
//! Corr_i = h_i . (sum_j h_j - h_i) / (N - 1)
//! ```
//!
//! and `P` is trained with a rank-scaled pairwise margin loss so that the
//! Corr ordering follows the ordering of reviews by ROUGE against the
//! reference summary.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Entity, Perspective};
use crate::features::{featurize, FeatureVec, FEATURE_DIM};
use crate::ranking::{pairwise_margin_loss, Ranking, RankingError};
use crate::rouge::RougeVariant;
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Error, PartialEq)]
pub enum ValuationError {
    #[error("leave-one-out scores need at least 2 reviews, got {0}")]
    TooFewReviews(usize),
    #[error("reference summary is empty")]
    EmptyReference,
    #[error("no entity has a usable reference and at least two reviews")]
    EmptyTrainingSet,
    #[error(transparent)]
    Ranking(#[from] RankingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValuationConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Entities per gradient step.
    pub batch_size: usize,
    /// Larger review sets are subsampled to this size each epoch.
    pub max_reviews: usize,
    pub init_scale: f64,
    pub rouge_variant: RougeVariant,
    /// Train one scorer per perspective rather than one shared scorer.
    pub per_perspective: bool,
}

impl Default for ValuationConfig {
    fn default() -> Self {
        ValuationConfig {
            dim: 64,
            epochs: 10,
            learning_rate: 0.05,
            batch_size: 8,
            max_reviews: 64,
            init_scale: 0.1,
            rouge_variant: RougeVariant::Mean,
            per_perspective: true,
        }
    }
}

/// Projection from hashed features to `dim`-dimensional review embeddings.
/// Stored feature-major: the `dim` weights of feature `i` are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuationScorer {
    dim: usize,
    weights: Vec<f64>,
}

/// Sparse gradient: one `dim`-vector per touched feature column.
pub type ColumnGrad = BTreeMap<u32, Vec<f64>>;

impl ValuationScorer {
    pub fn zeros(dim: usize) -> Self {
        ValuationScorer {
            dim,
            weights: vec![0.0; dim * FEATURE_DIM],
        }
    }

    pub fn random(dim: usize, scale: f64, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let weights = (0..dim * FEATURE_DIM)
            .map(|_| rng.gen_range(-scale..=scale))
            .collect();
        ValuationScorer { dim, weights }
    }

    pub fn from_params(dim: usize, params: Vec<f64>) -> Option<Self> {
        (params.len() == dim * FEATURE_DIM).then_some(ValuationScorer {
            dim,
            weights: params,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &[f64] {
        &self.weights
    }

    pub fn column(&self, feature: usize) -> &[f64] {
        &self.weights[feature * self.dim..(feature + 1) * self.dim]
    }

    pub fn column_mut(&mut self, feature: usize) -> &mut [f64] {
        &mut self.weights[feature * self.dim..(feature + 1) * self.dim]
    }

    pub fn scale(&mut self, c: f64) {
        self.weights.iter_mut().for_each(|w| *w *= c);
    }

    pub fn embed(&self, x: &FeatureVec) -> Vec<f64> {
        let mut h = vec![0.0; self.dim];
        for (i, v) in x.iter() {
            for (hk, w) in h.iter_mut().zip(self.column(i)) {
                *hk += w * v;
            }
        }
        h
    }

    pub fn embed_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        self.embed(&featurize(tokens))
    }

    pub fn corr_for_entity(&self, entity: &Entity) -> Result<Vec<f64>, ValuationError> {
        let embeddings: Vec<Vec<f64>> = entity
            .reviews
            .iter()
            .map(|r| self.embed_tokens(&r.tokens))
            .collect();
        corr_scores(&embeddings)
    }

    /// Margin loss of one review set and its gradient with respect to the
    /// projection, in O(N·d) beyond the pairwise hinge terms.
    pub fn loss_and_grad(
        &self,
        features: &[FeatureVec],
        ranking: &Ranking,
        margin: f64,
    ) -> Result<(f64, ColumnGrad), ValuationError> {
        let n = features.len();
        let embeddings: Vec<Vec<f64>> = features.iter().map(|x| self.embed(x)).collect();
        let corr = corr_scores(&embeddings)?;
        let (loss, dcorr) = pairwise_margin_loss(&corr, ranking, margin)?;

        let mut grad = ColumnGrad::new();
        if loss == 0.0 {
            return Ok((loss, grad));
        }
        let total = sum_vectors(&embeddings, self.dim);
        let mut weighted = vec![0.0; self.dim];
        for (h, g) in embeddings.iter().zip(&dcorr) {
            axpy(&mut weighted, *g, h);
        }
        let inv = 1.0 / (n - 1) as f64;
        for (k, x) in features.iter().enumerate() {
            let g = dcorr[k];
            // d Corr_k / d h_k = (S - h_k)/(N-1); d Corr_i / d h_k = h_i/(N-1)
            let dh: Vec<f64> = (0..self.dim)
                .map(|r| inv * (g * (total[r] - embeddings[k][r]) + weighted[r] - g * embeddings[k][r]))
                .collect();
            for (i, v) in x.iter() {
                let col = grad.entry(i as u32).or_insert_with(|| vec![0.0; self.dim]);
                axpy(col, v, &dh);
            }
        }
        Ok((loss, grad))
    }

    pub fn apply(&mut self, grad: &ColumnGrad, step: f64) {
        for (&i, g) in grad {
            axpy(self.column_mut(i as usize), -step, g);
        }
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn sum_vectors(vs: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut s = vec![0.0; dim];
    for v in vs {
        axpy(&mut s, 1.0, v);
    }
    s
}

/// Leave-one-out correlation of every embedding with the mean of the others,
/// using the shared sum so the cost is O(N·d).
pub fn corr_scores(embeddings: &[Vec<f64>]) -> Result<Vec<f64>, ValuationError> {
    let n = embeddings.len();
    if n < 2 {
        return Err(ValuationError::TooFewReviews(n));
    }
    let dim = embeddings[0].len();
    let total = sum_vectors(embeddings, dim);
    let inv = 1.0 / (n - 1) as f64;
    Ok(embeddings
        .iter()
        .map(|h| {
            let dot: f64 = h.iter().zip(&total).map(|(a, s)| a * (s - a)).sum();
            dot * inv
        })
        .collect())
}

/// Ranks reviews by ROUGE against `reference`; rank 1 is the closest.
pub fn rouge_ranking<S: AsRef<[String]>>(
    reviews: &[S],
    reference: &[String],
    variant: RougeVariant,
) -> Result<Ranking, ValuationError> {
    if reference.is_empty() {
        return Err(ValuationError::EmptyReference);
    }
    let scores = reviews
        .iter()
        .map(|r| variant.score(r.as_ref(), reference))
        .collect();
    Ok(Ranking::from_scores(scores))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValuationReport {
    /// Mean per-entity loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
}

struct TrainItem<'a> {
    entity_id: &'a str,
    features: Vec<FeatureVec>,
    targets: Vec<f64>,
}

/// Trains a scorer for `perspective` by mini-batch gradient descent on the
/// margin loss, averaged over the entities of each batch.
pub fn train_valuation(
    corpus: &Corpus,
    perspective: Option<Perspective>,
    cfg: &ValuationConfig,
    margin: f64,
    seed: u64,
) -> Result<(ValuationScorer, ValuationReport), ValuationError> {
    let perspectives: Vec<Perspective> = match perspective {
        Some(p) => vec![p],
        None => Perspective::ALL.to_vec(),
    };
    let mut items = Vec::new();
    for entity in &corpus.entities {
        if entity.reviews.len() < 2 {
            continue;
        }
        let features: Vec<FeatureVec> = entity.reviews.iter().map(|r| featurize(&r.tokens)).collect();
        for &p in &perspectives {
            let Some(reference) = entity.reference(p) else {
                continue;
            };
            let targets = entity
                .reviews
                .iter()
                .map(|r| cfg.rouge_variant.score(&r.tokens, reference))
                .collect();
            items.push(TrainItem {
                entity_id: &entity.entity_id,
                features: features.clone(),
                targets,
            });
        }
    }
    if items.is_empty() {
        return Err(ValuationError::EmptyTrainingSet);
    }

    let mut scorer = ValuationScorer::random(cfg.dim, cfg.init_scale, derive_seed(seed, "valuation-init", "", 0));
    let mut report = ValuationReport::default();
    let batch = cfg.batch_size.max(1);
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for chunk in items.chunks(batch) {
            let results: Vec<Result<(f64, ColumnGrad), ValuationError>> = chunk
                .par_iter()
                .map(|item| {
                    let (features, targets) = subsample(item, cfg.max_reviews, seed, epoch);
                    let ranking = Ranking::from_scores(targets);
                    scorer.loss_and_grad(&features, &ranking, margin)
                })
                .collect();
            let mut merged = ColumnGrad::new();
            let scale = 1.0 / chunk.len() as f64;
            for r in results {
                let (loss, grad) = r?;
                epoch_loss += loss;
                for (i, g) in grad {
                    let col = merged.entry(i).or_insert_with(|| vec![0.0; cfg.dim]);
                    axpy(col, scale, &g);
                }
            }
            scorer.apply(&merged, cfg.learning_rate);
        }
        let mean = epoch_loss / items.len() as f64;
        log::debug!("valuation epoch {} loss {:.6}", epoch + 1, mean);
        report.epoch_losses.push(mean);
    }
    Ok((scorer, report))
}

fn subsample(item: &TrainItem<'_>, max: usize, seed: u64, epoch: usize) -> (Vec<FeatureVec>, Vec<f64>) {
    let n = item.features.len();
    if n <= max {
        return (item.features.clone(), item.targets.clone());
    }
    let mut rng = rng_from_seed(derive_seed(seed, "valuation-subsample", item.entity_id, epoch as u64));
    let mut ids = index::sample(&mut rng, n, max).into_vec();
    ids.sort_unstable();
    (
        ids.iter().map(|&i| item.features[i].clone()).collect(),
        ids.iter().map(|&i| item.targets[i]).collect(),
    )
}
