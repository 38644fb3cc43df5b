mod common;

use common::checks;
use subsumm::corpus::{generate_synthetic, GenConfig, Perspective, Split};
use subsumm::ranking::kendall_tau_b;
use subsumm::rouge::RougeVariant;
use subsumm::valuation::{rouge_ranking, train_valuation, ValuationConfig};

#[test]
fn fast_path_matches_brute_force_and_is_faster() {
    checks::corr_fast_path().unwrap();
}

fn corpus(entities: usize, split: Split, seed: u64) -> subsumm::corpus::SyntheticCorpus {
    let cfg = GenConfig {
        entities,
        split,
        entity_prefix: split.as_str().into(),
        ..GenConfig::default()
    };
    generate_synthetic(&cfg, seed).unwrap()
}

#[test]
fn trained_corr_follows_rouge_on_held_out_entities() {
    let train = corpus(100, Split::Train, 1).corpus;
    let test = corpus(40, Split::Test, 2);
    let (scorer, report) =
        train_valuation(&train, Some(Perspective::Pros), &ValuationConfig::default(), 1e-2, 7).unwrap();
    assert!(report.epoch_losses.last() < report.epoch_losses.first());
    let mut taus = Vec::new();
    let mut planted_above = 0usize;
    let mut pairs = 0usize;
    for (entity, oracle) in test.corpus.entities.iter().zip(&test.oracle) {
        let corr = scorer.corr_for_entity(entity).unwrap();
        let reviews: Vec<&[String]> = entity.reviews.iter().map(|r| r.tokens.as_slice()).collect();
        let reference = entity.reference(Perspective::Pros).unwrap();
        let ranking = rouge_ranking(&reviews, reference, RougeVariant::Mean).unwrap();
        taus.push(kendall_tau_b(&corr, ranking.scores()).unwrap());
        let planted = &oracle.planted[&Perspective::Pros];
        for &i in planted {
            for j in (0..entity.reviews.len()).filter(|j| !planted.contains(j)) {
                pairs += 1;
                planted_above += (corr[i] > corr[j]) as usize;
            }
        }
    }
    let tau = taus.iter().sum::<f64>() / taus.len() as f64;
    let frac = planted_above as f64 / pairs as f64;
    println!("mean tau {tau:.3}, planted above unplanted {frac:.3}");
    assert!(tau > 0.6, "mean Kendall tau {tau}");
    assert!(frac > 0.95, "planted ranked above unplanted in {frac}");
}
