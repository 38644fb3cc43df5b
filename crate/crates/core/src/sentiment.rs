//! Rating-supervised sentiment tagging.
//!
//! A multinomial logistic classifier over hashed features predicts the
//! rating class of each review; the argmax class is then mapped to a binary
//! polarity for the sampling strategies.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Review};
use crate::features::{featurize, FeatureVec, FEATURE_DIM};

#[derive(Debug, Error)]
pub enum SentimentError {
    #[error("no training reviews")]
    EmptyTrainingSet,
    #[error("model has {model} classes but corpus rating_max is {corpus}")]
    ClassMismatch { model: usize, corpus: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// Positive iff `class` lies strictly above the midpoint of `1..=rating_max`.
pub fn polarity_of(class: u32, rating_max: u32) -> Polarity {
    if 2 * class > rating_max + 1 {
        Polarity::Positive
    } else {
        Polarity::Negative
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarityRule {
    #[default]
    Midpoint,
    /// Classes `>= min_positive` are positive.
    Threshold { min_positive: u32 },
}

impl PolarityRule {
    pub fn apply(self, class: u32, rating_max: u32) -> Polarity {
        match self {
            PolarityRule::Midpoint => polarity_of(class, rating_max),
            PolarityRule::Threshold { min_positive } if class >= min_positive => {
                Polarity::Positive
            }
            PolarityRule::Threshold { .. } => Polarity::Negative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SentimentConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub polarity: PolarityRule,
}

impl Default for SentimentConfig {
    fn default() -> Self {
        SentimentConfig {
            epochs: 30,
            learning_rate: 1.0,
            batch_size: 32,
            l2: 1e-4,
            polarity: PolarityRule::Midpoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentTag {
    /// 1-based rating class.
    pub class: u32,
    pub distribution: Vec<f64>,
    pub polarity: Polarity,
}

/// Index of the largest entry; the lowest index wins exact ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in values.iter_mut() {
        *v /= sum;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentimentModel {
    classes: usize,
    /// `classes x FEATURE_DIM`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentimentGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Full-data objective before training and after each epoch.
    pub epoch_losses: Vec<f64>,
}

impl SentimentModel {
    pub fn zeros(classes: usize) -> Self {
        SentimentModel {
            classes,
            weights: vec![0.0; classes * FEATURE_DIM],
            bias: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Flattened parameters: weights then bias.
    pub fn params(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.bias).copied().collect()
    }

    pub fn from_params(classes: usize, params: &[f64]) -> Option<Self> {
        let nw = classes * FEATURE_DIM;
        if params.len() != nw + classes {
            return None;
        }
        Some(SentimentModel {
            classes,
            weights: params[..nw].to_vec(),
            bias: params[nw..].to_vec(),
        })
    }

    pub fn logits(&self, x: &FeatureVec) -> Vec<f64> {
        (0..self.classes)
            .map(|c| {
                let row = &self.weights[c * FEATURE_DIM..(c + 1) * FEATURE_DIM];
                self.bias[c] + x.dot_dense(row)
            })
            .collect()
    }

    pub fn distribution(&self, x: &FeatureVec) -> Vec<f64> {
        let mut p = self.logits(x);
        softmax_in_place(&mut p);
        p
    }

    pub fn predict_tokens<S: AsRef<str>>(&self, tokens: &[S], rule: PolarityRule) -> SentimentTag {
        let distribution = self.distribution(&featurize(tokens));
        let class = argmax(&distribution) as u32 + 1;
        SentimentTag {
            class,
            polarity: rule.apply(class, self.classes as u32),
            distribution,
        }
    }

    /// Mean negative log-likelihood plus `l2/2 * ||W||^2` (bias unpenalized).
    pub fn objective(&self, examples: &[(FeatureVec, usize)], l2: f64) -> f64 {
        let nll: f64 = examples
            .iter()
            .map(|(x, y)| -self.distribution(x)[*y].ln())
            .sum::<f64>()
            / examples.len().max(1) as f64;
        nll + 0.5 * l2 * self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn objective_grad(&self, examples: &[(FeatureVec, usize)], l2: f64) -> SentimentGrad {
        let mut grad = SentimentGrad {
            weights: self.weights.iter().map(|w| l2 * w).collect(),
            bias: vec![0.0; self.classes],
        };
        let scale = 1.0 / examples.len().max(1) as f64;
        for (x, y) in examples {
            let mut delta = self.distribution(x);
            delta[*y] -= 1.0;
            for (c, d) in delta.iter().enumerate() {
                grad.bias[c] += scale * d;
                for (i, v) in x.iter() {
                    grad.weights[c * FEATURE_DIM + i] += scale * d * v;
                }
            }
        }
        grad
    }

    /// One gradient step on a batch, exploiting feature sparsity.
    fn step(&mut self, batch: &[(FeatureVec, usize)], lr: f64, l2: f64) {
        let deltas: Vec<Vec<f64>> = batch
            .iter()
            .map(|(x, y)| {
                let mut d = self.distribution(x);
                d[*y] -= 1.0;
                d
            })
            .collect();
        let decay = 1.0 - lr * l2;
        if decay != 1.0 {
            self.weights.iter_mut().for_each(|w| *w *= decay);
        }
        let scale = lr / batch.len() as f64;
        for ((x, _), delta) in batch.iter().zip(&deltas) {
            for (c, d) in delta.iter().enumerate() {
                self.bias[c] -= scale * d;
                let row = &mut self.weights[c * FEATURE_DIM..(c + 1) * FEATURE_DIM];
                for (i, v) in x.iter() {
                    row[i] -= scale * d * v;
                }
            }
        }
    }
}

/// `(featurize(review), rating - 1)` for every review of the corpus.
pub fn training_examples(corpus: &Corpus) -> Vec<(FeatureVec, usize)> {
    corpus
        .entities
        .iter()
        .flat_map(|e| &e.reviews)
        .map(|r| (featurize(&r.tokens), r.rating as usize - 1))
        .collect()
}

/// Mini-batch gradient descent in a fixed pass order from a zero start.
/// The objective is convex, so no random initialization is needed and the
/// result is fully determined by the corpus and `cfg`.
pub fn train_sentiment(
    corpus: &Corpus,
    cfg: &SentimentConfig,
) -> Result<(SentimentModel, TrainReport), SentimentError> {
    let examples = training_examples(corpus);
    if examples.is_empty() {
        return Err(SentimentError::EmptyTrainingSet);
    }
    let mut model = SentimentModel::zeros(corpus.rating_max as usize);
    let mut report = TrainReport {
        epoch_losses: vec![model.objective(&examples, cfg.l2)],
    };
    let batch = cfg.batch_size.max(1);
    for epoch in 0..cfg.epochs {
        for chunk in examples.chunks(batch) {
            model.step(chunk, cfg.learning_rate, cfg.l2);
        }
        let loss = model.objective(&examples, cfg.l2);
        log::debug!("sentiment epoch {} loss {:.6}", epoch + 1, loss);
        report.epoch_losses.push(loss);
    }
    Ok((model, report))
}

pub fn predict_sentiment(model: &SentimentModel, review: &Review, rule: PolarityRule) -> SentimentTag {
    model.predict_tokens(&review.tokens, rule)
}

pub fn check_classes(model: &SentimentModel, corpus: &Corpus) -> Result<(), SentimentError> {
    if model.classes() != corpus.rating_max as usize {
        return Err(SentimentError::ClassMismatch {
            model: model.classes(),
            corpus: corpus.rating_max,
        });
    }
    Ok(())
}
