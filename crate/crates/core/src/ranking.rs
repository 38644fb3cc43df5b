//! Rankings and the rank-scaled pairwise margin loss shared by review
//! valuation and candidate-summary contrastive training.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Scores closer than this are treated as tied.
pub const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum RankingError {
    #[error("length mismatch: {scores} scores for {ranked} ranked items")]
    LengthMismatch { scores: usize, ranked: usize },
}

/// A 1-based rank per item (`rank[i] == 1` is the best item) together with
/// the scores it was derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    ranks: Vec<usize>,
    scores: Vec<f64>,
}

impl Ranking {
    /// Sorts by score descending; ties go to the lower index.
    pub fn from_scores(scores: Vec<f64>) -> Ranking {
        let order = argsort_desc(&scores);
        let mut ranks = vec![0; scores.len()];
        for (pos, &i) in order.iter().enumerate() {
            ranks[i] = pos + 1;
        }
        Ranking { ranks, scores }
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn rank(&self, i: usize) -> usize {
        self.ranks[i]
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Item indices from best to worst.
    pub fn order(&self) -> Vec<usize> {
        let mut order = vec![0; self.ranks.len()];
        for (i, &r) in self.ranks.iter().enumerate() {
            order[r - 1] = i;
        }
        order
    }

    /// Pairs `(better, worse)` whose underlying scores differ.
    pub fn comparable_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.len();
        (0..n).flat_map(move |i| {
            (0..n).filter_map(move |j| {
                (self.ranks[j] > self.ranks[i]
                    && (self.scores[i] - self.scores[j]).abs() > TIE_EPS)
                    .then_some((i, j))
            })
        })
    }
}

/// Indices sorted by value descending, ties by ascending index.
pub fn argsort_desc(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// `sum over comparable (i better than j) of max(0, s_j - s_i + margin * (r_j - r_i))`
/// and its gradient with respect to `scores`.
pub fn pairwise_margin_loss(
    scores: &[f64],
    ranking: &Ranking,
    margin: f64,
) -> Result<(f64, Vec<f64>), RankingError> {
    if scores.len() != ranking.len() {
        return Err(RankingError::LengthMismatch {
            scores: scores.len(),
            ranked: ranking.len(),
        });
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; scores.len()];
    for (i, j) in ranking.comparable_pairs() {
        let gap = (ranking.rank(j) - ranking.rank(i)) as f64;
        let hinge = scores[j] - scores[i] + margin * gap;
        if hinge > 0.0 {
            loss += hinge;
            grad[j] += 1.0;
            grad[i] -= 1.0;
        }
    }
    Ok((loss, grad))
}

/// Fraction of comparable pairs where the better item also scores higher.
pub fn pairwise_accuracy(scores: &[f64], ranking: &Ranking) -> Option<f64> {
    let mut total = 0usize;
    let mut correct = 0usize;
    for (i, j) in ranking.comparable_pairs() {
        total += 1;
        if scores[i] > scores[j] {
            correct += 1;
        }
    }
    (total > 0).then(|| correct as f64 / total as f64)
}

/// Kendall's tau-b between two score vectors.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    let (mut concordant, mut discordant, mut ties_x, mut ties_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            let tx = dx.abs() <= TIE_EPS;
            let ty = dy.abs() <= TIE_EPS;
            match (tx, ty) {
                (true, true) => {}
                (true, false) => ties_x += 1,
                (false, true) => ties_y += 1,
                (false, false) if (dx > 0.0) == (dy > 0.0) => concordant += 1,
                (false, false) => discordant += 1,
            }
        }
    }
    let denom = (((concordant + discordant + ties_x) * (concordant + discordant + ties_y)) as f64).sqrt();
    (denom > 0.0).then(|| (concordant - discordant) as f64 / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_from_scores() {
        let r = Ranking::from_scores(vec![0.2, 0.9, 0.2, 0.5]);
        assert_eq!(r.ranks(), &[3, 1, 4, 2]);
        assert_eq!(r.order(), vec![1, 3, 0, 2]);
        let tied = Ranking::from_scores(vec![1.0; 4]);
        assert_eq!(tied.ranks(), &[1, 2, 3, 4]);
        assert_eq!(tied.comparable_pairs().count(), 0);
    }

    #[test]
    fn margin_examples() {
        let r = Ranking::from_scores(vec![2.0, 1.0]);
        let (l, _) = pairwise_margin_loss(&[0.9, 0.1], &r, 0.01).unwrap();
        assert_eq!(l, 0.0);
        let (l, g) = pairwise_margin_loss(&[0.5, 0.7], &r, 0.01).unwrap();
        assert!((l - 0.21).abs() < 1e-12);
        assert_eq!(g, vec![-1.0, 1.0]);
        let (l, _) = pairwise_margin_loss(&[-0.9, -0.2], &r, 1e-3).unwrap();
        assert!((l - 0.701).abs() < 1e-12);
        assert_eq!(
            pairwise_margin_loss(&[1.0], &r, 0.0),
            Err(RankingError::LengthMismatch { scores: 1, ranked: 2 })
        );
    }

    #[test]
    fn tau_extremes() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau_b(&a, &a), Some(1.0));
        let rev = [4.0, 3.0, 2.0, 1.0];
        assert_eq!(kendall_tau_b(&a, &rev), Some(-1.0));
        assert_eq!(kendall_tau_b(&[1.0, 1.0], &[1.0, 1.0]), None);
    }

    proptest::proptest! {
        #[test]
        fn zero_loss_iff_margins_hold(
            scores in proptest::collection::vec(-2.0f64..2.0, 2..8),
            targets in proptest::collection::vec(0u8..4, 2..8),
            margin in 0.0f64..0.3,
        ) {
            let n = scores.len().min(targets.len());
            let ranking = Ranking::from_scores(targets[..n].iter().map(|&t| t as f64).collect());
            let (loss, _) = pairwise_margin_loss(&scores[..n], &ranking, margin).unwrap();
            let holds = ranking.comparable_pairs().all(|(i, j)| {
                scores[i] - scores[j] >= margin * (ranking.rank(j) - ranking.rank(i)) as f64
            });
            proptest::prop_assert_eq!(loss == 0.0, holds);
            proptest::prop_assert!(loss >= 0.0);
        }
    }
}
