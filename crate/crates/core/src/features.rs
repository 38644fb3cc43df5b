//! Hashed unigram+bigram term-frequency features.
//!
//! Buckets are `fnv1a64(bytes) mod 2^15`, where a bigram hashes the two
//! tokens joined by a single space. Tokens never contain spaces, so unigram
//! and bigram keys cannot collide before bucketing. Vectors are
//! L2-normalized; the empty sequence maps to the zero vector.

use std::collections::BTreeMap;

use crate::seed::fnv1a64;

pub const FEATURE_BITS: u32 = 15;
pub const FEATURE_DIM: usize = 1 << FEATURE_BITS;

/// Bumped whenever bucketing changes; stored in checkpoints.
pub const FEATURE_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVec {
    /// Strictly increasing bucket indices.
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl FeatureVec {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| dense[i] * v).sum()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, v) in pairs {
            *acc.entry(i).or_insert(0.0) += v;
        }
        let (indices, values) = acc.into_iter().filter(|&(_, v)| v != 0.0).unzip();
        FeatureVec { indices, values }
    }
}

pub fn bucket(bytes: &[u8]) -> u32 {
    (fnv1a64(bytes) % FEATURE_DIM as u64) as u32
}

pub fn featurize<S: AsRef<str>>(tokens: &[S]) -> FeatureVec {
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for t in tokens {
        *counts.entry(bucket(t.as_ref().as_bytes())).or_insert(0.0) += 1.0;
    }
    let mut scratch = Vec::new();
    for pair in tokens.windows(2) {
        scratch.clear();
        scratch.extend_from_slice(pair[0].as_ref().as_bytes());
        scratch.push(b' ');
        scratch.extend_from_slice(pair[1].as_ref().as_bytes());
        *counts.entry(bucket(&scratch)).or_insert(0.0) += 1.0;
    }
    let norm = counts.values().map(|v| v * v).sum::<f64>().sqrt();
    let (indices, values) = counts
        .into_iter()
        .map(|(i, c)| (i, c / norm))
        .unzip();
    FeatureVec { indices, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_normalized() {
        let a = featurize(&["good", "sound", "quality"]);
        assert_eq!(a, featurize(&["good", "sound", "quality"]));
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert!(a.values.iter().all(|&v| v > 0.0));
        assert!(a.indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn empty_is_zero() {
        let e = featurize::<&str>(&[]);
        assert_eq!(e.nnz(), 0);
        assert_eq!(e.norm(), 0.0);
    }

    #[test]
    fn repeated_token_adds_bigram() {
        // [good] is the unit vector on the unigram bucket; [good, good]
        // has count 2 there plus one "good good" bigram, so it is (2, 1)/sqrt(5).
        let one = featurize(&["good"]);
        let two = featurize(&["good", "good"]);
        let uni = bucket(b"good");
        let bi = bucket(b"good good");
        assert_ne!(uni, bi);
        assert_eq!(one.indices, vec![uni]);
        assert_eq!(one.values, vec![1.0]);
        let get = |f: &FeatureVec, i: u32| f.iter().find(|&(j, _)| j == i as usize).unwrap().1;
        assert!((get(&two, uni) - 2.0 / 5f64.sqrt()).abs() < 1e-15);
        assert!((get(&two, bi) - 1.0 / 5f64.sqrt()).abs() < 1e-15);
        // the unigram direction is shared
        let cos = get(&two, uni) * get(&one, uni);
        assert!(cos > 0.89);
    }

    #[test]
    fn from_pairs_merges() {
        let f = FeatureVec::from_pairs([(3, 1.0), (1, 2.0), (3, 0.5)]);
        assert_eq!(f.indices, vec![1, 3]);
        assert_eq!(f.values, vec![2.0, 1.5]);
    }
}
