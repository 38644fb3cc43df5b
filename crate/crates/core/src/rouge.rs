//! ROUGE-1/2/L F1 over token sequences.
//!
//! Used in three places: ranking reviews against a reference when training
//! the valuation scorer, ranking candidate summaries in stage II, and final
//! evaluation. No stemming or stopword removal is applied.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Builds P/R/F1 from a match count and the two sequence sizes. Empty
    /// denominators yield zero.
    pub fn from_counts(matches: usize, candidate_total: usize, reference_total: usize) -> Prf {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(matches, candidate_total);
        let recall = ratio(matches, reference_total);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub r1: Prf,
    pub r2: Prf,
    pub rl: Prf,
}

impl RougeScore {
    pub fn mean_f1(&self) -> f64 {
        (self.r1.f1 + self.r2.f1 + self.rl.f1) / 3.0
    }
}

/// Which scalar ROUGE summary to rank by.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RougeVariant {
    #[default]
    Mean,
    R1,
    R2,
    Rl,
}

impl RougeVariant {
    pub fn score<T: Eq + Hash>(self, candidate: &[T], reference: &[T]) -> f64 {
        match self {
            RougeVariant::Mean => rouge_mean(candidate, reference),
            RougeVariant::R1 => rouge_n(candidate, reference, 1).f1,
            RougeVariant::R2 => rouge_n(candidate, reference, 2).f1,
            RougeVariant::Rl => rouge_l(candidate, reference).f1,
        }
    }
}

pub fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    assert!(n >= 1, "n-gram order must be at least 1");
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> Prf {
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let overlap: usize = cand
        .iter()
        .map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0)))
        .sum();
    Prf::from_counts(overlap, cand.values().sum(), refc.values().sum())
}

/// Longest common subsequence length, O(|a|·|b|) time and O(|b|) space.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> Prf {
    Prf::from_counts(
        lcs_len(candidate, reference),
        candidate.len(),
        reference.len(),
    )
}

pub fn rouge<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> RougeScore {
    RougeScore {
        r1: rouge_n(candidate, reference, 1),
        r2: rouge_n(candidate, reference, 2),
        rl: rouge_l(candidate, reference),
    }
}

/// Mean of ROUGE-1, ROUGE-2 and ROUGE-L F1.
pub fn rouge_mean<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> f64 {
    rouge(candidate, reference).mean_f1()
}
