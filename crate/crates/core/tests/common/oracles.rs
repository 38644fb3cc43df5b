//! Slow, obviously-correct reference implementations.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// LCS length by enumerating every subsequence of the shorter input.
pub fn lcs_exhaustive<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    assert!(short.len() <= 16, "exhaustive LCS is exponential");
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let len = mask.count_ones() as usize;
        if len <= best {
            continue;
        }
        let sub: Vec<&T> = (0..short.len()).filter(|i| mask >> i & 1 == 1).map(|i| &short[i]).collect();
        if is_subsequence(&sub, long) {
            best = len;
        }
    }
    best
}

fn is_subsequence<T: PartialEq>(sub: &[&T], seq: &[T]) -> bool {
    let mut it = seq.iter();
    sub.iter().all(|s| it.any(|x| x == *s))
}

/// Clipped n-gram matches by greedy one-to-one pairing of equal n-grams.
pub fn ngram_matches<T: PartialEq>(candidate: &[T], reference: &[T], n: usize) -> (usize, usize, usize) {
    let grams = |s: &[T]| -> Vec<Vec<usize>> {
        if s.len() < n {
            return Vec::new();
        }
        (0..=s.len() - n).map(|i| (i..i + n).collect()).collect()
    };
    let cand = grams(candidate);
    let refs = grams(reference);
    let mut used = vec![false; refs.len()];
    let mut matches = 0;
    for c in &cand {
        let hit = (0..refs.len())
            .find(|&j| !used[j] && c.iter().zip(&refs[j]).all(|(&x, &y)| candidate[x] == reference[y]));
        if let Some(j) = hit {
            used[j] = true;
            matches += 1;
        }
    }
    (matches, cand.len(), refs.len())
}

/// (precision, recall, f1) from a match count, zero on empty denominators.
pub fn prf(matches: usize, cand: usize, reference: usize) -> (f64, f64, f64) {
    let p = if cand == 0 { 0.0 } else { matches as f64 / cand as f64 };
    let r = if reference == 0 { 0.0 } else { matches as f64 / reference as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Leave-one-out correlation computed pair by pair.
pub fn corr_brute(embeddings: &[Vec<f64>]) -> Vec<f64> {
    let n = embeddings.len();
    (0..n)
        .map(|i| {
            let mut s = 0.0;
            for j in 0..n {
                if j != i {
                    s += embeddings[i].iter().zip(&embeddings[j]).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            s / (n - 1) as f64
        })
        .collect()
}

/// One-sided paired t-test of `mean(a - b) > 0`; returns (mean diff, p).
pub fn paired_t_greater(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return (mean, if mean > 0.0 { 0.0 } else { 1.0 });
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).unwrap();
    (mean, 1.0 - dist.cdf(t))
}
