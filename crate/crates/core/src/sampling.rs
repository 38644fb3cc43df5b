//! Review subset selection.
//!
//! Four strategies pick `K` of an entity's `N` reviews:
//!
//! | strategy | polarity quota | within a polarity pool |
//! |----------|----------------|------------------------|
//! | `Random` | none | uniform without replacement |
//! | `SentimentRandom` | from the perspective | uniform without replacement |
//! | `SentimentInfo` | from the perspective | top Corr, ties by id |
//! | `SentimentInfoWeighted` | from the perspective | softmax(Corr) draws without replacement |

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Perspective;
use crate::ranking::argsort_desc;
use crate::seed::rng_from_seed;
use crate::sentiment::Polarity;

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("K must be at least 1")]
    InvalidK,
    #[error("entity has no reviews")]
    NoReviews,
    #[error("quota ({k_pos}, {k_neg}) exceeds available ({n_pos}, {n_neg})")]
    QuotaInfeasible {
        k_pos: usize,
        k_neg: usize,
        n_pos: usize,
        n_neg: usize,
    },
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    SentimentRandom,
    SentimentInfo,
    SentimentInfoWeighted,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::SentimentRandom => "sentiment_random",
            Strategy::SentimentInfo => "sentiment_info",
            Strategy::SentimentInfoWeighted => "sentiment_info_weighted",
        }
    }

    pub fn is_stochastic(self) -> bool {
        self != Strategy::SentimentInfo
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = SamplingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Strategy::Random,
            Strategy::SentimentRandom,
            Strategy::SentimentInfo,
            Strategy::SentimentInfoWeighted,
        ]
        .into_iter()
        .find(|st| st.as_str() == s)
        .ok_or_else(|| SamplingError::UnknownStrategy(s.to_owned()))
    }
}

/// Per-polarity review budget. `requested_*` is the raw split before it is
/// clamped to the reviews actually available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quota {
    pub k_pos: usize,
    pub k_neg: usize,
    pub requested_pos: usize,
    pub requested_neg: usize,
}

impl Quota {
    pub fn total(&self) -> usize {
        self.k_pos + self.k_neg
    }
}

/// Raw `(K+, K-)`: all-positive for pros, all-negative for cons, and a
/// proportional split for verdict with `K+` rounded half up.
pub fn requested_quota(
    perspective: Perspective,
    k: usize,
    n_pos: usize,
    n_neg: usize,
) -> Result<(usize, usize), SamplingError> {
    if k < 1 {
        return Err(SamplingError::InvalidK);
    }
    Ok(match perspective {
        Perspective::Pros => (k, 0),
        Perspective::Cons => (0, k),
        Perspective::Verdict => {
            let n = n_pos + n_neg;
            if n == 0 {
                return Err(SamplingError::NoReviews);
            }
            // round(K * n_pos / n) with halves going up, in integers
            let k_pos = (2 * k * n_pos + n) / (2 * n);
            (k_pos, k - k_pos)
        }
    })
}

/// Requested quota clamped to availability; any shortfall on one side is
/// moved to the other side, up to what that side can supply.
pub fn compute_quota(
    perspective: Perspective,
    k: usize,
    n_pos: usize,
    n_neg: usize,
) -> Result<Quota, SamplingError> {
    if n_pos + n_neg == 0 {
        return Err(SamplingError::NoReviews);
    }
    let (req_pos, req_neg) = requested_quota(perspective, k, n_pos, n_neg)?;
    let mut k_pos = req_pos.min(n_pos);
    let mut k_neg = req_neg.min(n_neg);
    let deficit = req_pos + req_neg - k_pos - k_neg;
    let extra_pos = deficit.min(n_pos - k_pos);
    k_pos += extra_pos;
    k_neg += (deficit - extra_pos).min(n_neg - k_neg);
    Ok(Quota {
        k_pos,
        k_neg,
        requested_pos: req_pos,
        requested_neg: req_neg,
    })
}

pub fn quota_for(
    perspective: Perspective,
    k: usize,
    polarities: &[Polarity],
) -> Result<Quota, SamplingError> {
    let n_pos = polarities.iter().filter(|&&p| p == Polarity::Positive).count();
    compute_quota(perspective, k, n_pos, polarities.len() - n_pos)
}

/// Selected review ids in selection order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subset {
    pub entity_id: String,
    pub strategy: Strategy,
    pub seed: Option<u64>,
    pub review_ids: Vec<usize>,
}

fn pools(polarities: &[Polarity]) -> (Vec<usize>, Vec<usize>) {
    (0..polarities.len()).partition(|&i| polarities[i] == Polarity::Positive)
}

fn check_feasible(quota: &Quota, pos: &[usize], neg: &[usize]) -> Result<(), SamplingError> {
    if quota.k_pos > pos.len() || quota.k_neg > neg.len() {
        return Err(SamplingError::QuotaInfeasible {
            k_pos: quota.k_pos,
            k_neg: quota.k_neg,
            n_pos: pos.len(),
            n_neg: neg.len(),
        });
    }
    Ok(())
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), SamplingError> {
    if got != expected {
        return Err(SamplingError::LengthMismatch {
            what,
            got,
            expected,
        });
    }
    Ok(())
}

fn uniform_pick<R: Rng>(rng: &mut R, pool: &[usize], k: usize) -> Vec<usize> {
    index::sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

/// Draws `k` items without replacement with probability proportional to
/// `weights`, renormalizing over the remaining items after every draw.
pub fn weighted_without_replacement<R: Rng>(rng: &mut R, weights: &[f64], k: usize) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..weights.len()).collect();
    let mut picked = Vec::with_capacity(k.min(weights.len()));
    while picked.len() < k && !remaining.is_empty() {
        let total: f64 = remaining.iter().map(|&i| weights[i]).sum();
        let mut u = rng.gen::<f64>() * total;
        let mut slot = remaining.len() - 1;
        for (s, &i) in remaining.iter().enumerate() {
            if u < weights[i] {
                slot = s;
                break;
            }
            u -= weights[i];
        }
        picked.push(remaining.remove(slot));
    }
    picked
}

/// Numerically stable softmax of `values`.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    crate::sentiment::softmax_in_place(&mut out);
    out
}

pub fn sample_random(entity_id: &str, n: usize, k: usize, seed: u64) -> Result<Subset, SamplingError> {
    if k < 1 {
        return Err(SamplingError::InvalidK);
    }
    let mut rng = rng_from_seed(seed);
    let review_ids = index::sample(&mut rng, n, k.min(n)).into_vec();
    Ok(Subset {
        entity_id: entity_id.to_owned(),
        strategy: Strategy::Random,
        seed: Some(seed),
        review_ids,
    })
}

pub fn sample_sentiment_random(
    entity_id: &str,
    polarities: &[Polarity],
    quota: &Quota,
    seed: u64,
) -> Result<Subset, SamplingError> {
    let (pos, neg) = pools(polarities);
    check_feasible(quota, &pos, &neg)?;
    let mut rng = rng_from_seed(seed);
    let mut review_ids = uniform_pick(&mut rng, &pos, quota.k_pos);
    review_ids.extend(uniform_pick(&mut rng, &neg, quota.k_neg));
    Ok(Subset {
        entity_id: entity_id.to_owned(),
        strategy: Strategy::SentimentRandom,
        seed: Some(seed),
        review_ids,
    })
}

pub fn select_sentiment_info(
    entity_id: &str,
    polarities: &[Polarity],
    corr: &[f64],
    quota: &Quota,
) -> Result<Subset, SamplingError> {
    check_len("corr", corr.len(), polarities.len())?;
    let (pos, neg) = pools(polarities);
    check_feasible(quota, &pos, &neg)?;
    let top = |pool: &[usize], k: usize| {
        let scores: Vec<f64> = pool.iter().map(|&i| corr[i]).collect();
        argsort_desc(&scores)
            .into_iter()
            .take(k)
            .map(|s| pool[s])
            .collect::<Vec<_>>()
    };
    let mut review_ids = top(&pos, quota.k_pos);
    review_ids.extend(top(&neg, quota.k_neg));
    Ok(Subset {
        entity_id: entity_id.to_owned(),
        strategy: Strategy::SentimentInfo,
        seed: None,
        review_ids,
    })
}

pub fn sample_sentiment_info_weighted(
    entity_id: &str,
    polarities: &[Polarity],
    corr: &[f64],
    quota: &Quota,
    seed: u64,
) -> Result<Subset, SamplingError> {
    check_len("corr", corr.len(), polarities.len())?;
    let (pos, neg) = pools(polarities);
    check_feasible(quota, &pos, &neg)?;
    let mut rng = rng_from_seed(seed);
    let mut draw = |pool: &[usize], k: usize| {
        let weights = softmax(&pool.iter().map(|&i| corr[i]).collect::<Vec<_>>());
        weighted_without_replacement(&mut rng, &weights, k)
            .into_iter()
            .map(|s| pool[s])
            .collect::<Vec<_>>()
    };
    let mut review_ids = draw(&pos, quota.k_pos);
    review_ids.extend(draw(&neg, quota.k_neg));
    Ok(Subset {
        entity_id: entity_id.to_owned(),
        strategy: Strategy::SentimentInfoWeighted,
        seed: Some(seed),
        review_ids,
    })
}

/// Everything a strategy may need about one entity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionInput<'a> {
    pub entity_id: &'a str,
    pub polarities: &'a [Polarity],
    pub corr: &'a [f64],
}

/// Dispatches to the strategy's constructor. `seed` is ignored by the
/// deterministic strategy.
pub fn select(
    strategy: Strategy,
    input: &SelectionInput<'_>,
    perspective: Perspective,
    k: usize,
    seed: u64,
) -> Result<Subset, SamplingError> {
    let n = input.polarities.len();
    if n == 0 {
        return Err(SamplingError::NoReviews);
    }
    match strategy {
        Strategy::Random => sample_random(input.entity_id, n, k, seed),
        Strategy::SentimentRandom => {
            let quota = quota_for(perspective, k, input.polarities)?;
            sample_sentiment_random(input.entity_id, input.polarities, &quota, seed)
        }
        Strategy::SentimentInfo => {
            let quota = quota_for(perspective, k, input.polarities)?;
            select_sentiment_info(input.entity_id, input.polarities, input.corr, &quota)
        }
        Strategy::SentimentInfoWeighted => {
            let quota = quota_for(perspective, k, input.polarities)?;
            sample_sentiment_info_weighted(input.entity_id, input.polarities, input.corr, &quota, seed)
        }
    }
}
