mod common;

use common::checks;
use common::oracles::{lcs_exhaustive, ngram_matches, prf};
use proptest::prelude::*;
use subsumm::rouge::{lcs_len, rouge, rouge_l, rouge_mean, rouge_n};

#[test]
fn agrees_with_brute_force_oracles() {
    checks::rouge_oracles().unwrap();
}

#[test]
fn mean_of_cat_example() {
    let c = ["the", "cat", "sat"];
    let r = ["the", "cat", "ate"];
    let (_, _, f1) = prf(2, 3, 3);
    assert_eq!(rouge_mean(&c, &r), (f1 + 0.5 + f1) / 3.0);
}

proptest! {
    #[test]
    fn lcs_matches_enumeration(a in prop::collection::vec(0u8..3, 0..9), b in prop::collection::vec(0u8..3, 0..9)) {
        prop_assert_eq!(lcs_len(&a, &b), lcs_exhaustive(&a, &b));
    }

    #[test]
    fn rouge_n_matches_pairing(a in prop::collection::vec(0u8..3, 0..12), b in prop::collection::vec(0u8..3, 0..12), n in 1usize..4) {
        let got = rouge_n(&a, &b, n);
        let (m, c, r) = ngram_matches(&a, &b, n);
        prop_assert_eq!((got.precision, got.recall, got.f1), prf(m, c, r));
    }

    #[test]
    fn identical_sequences_score_one(a in prop::collection::vec(0u8..6, 2..12)) {
        let s = rouge(&a, &a);
        prop_assert_eq!((s.r1.f1, s.r2.f1, s.rl.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn rouge_l_never_exceeds_unigram_f1(a in prop::collection::vec(0u8..4, 1..10), b in prop::collection::vec(0u8..4, 1..10)) {
        prop_assert!(rouge_l(&a, &b).f1 <= rouge_n(&a, &b, 1).f1 + 1e-12);
    }
}
