mod common;

use common::tiny::{self, Setup};
use subsumm::corpus::{GenConfig, Perspective};
use subsumm::pipeline::{
    gen_all_candidates, infer_prepared, init_summarizer, read_jsonl, train_stage1, train_stage2, write_jsonl,
    CandidateSet,
};
use subsumm::sampling::Strategy;

fn bits(p: &[f64]) -> Vec<u64> {
    p.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn stage1_loss_decreases_over_twenty_epochs() {
    let mut cfg = tiny::config();
    cfg.synth = GenConfig { entities: 50, ..GenConfig::default() };
    cfg.stage1.epochs = 20;
    let s = Setup::new(cfg);
    let prepared = s.prepared(&s.train, Perspective::Pros);
    let init = init_summarizer(&s.shared.vocab, Perspective::Pros, &s.cfg);
    let (_, report) = train_stage1(init, &prepared, Perspective::Pros, Strategy::SentimentRandom, &s.cfg).unwrap();
    assert_eq!(report.epoch_losses.len(), 20);
    assert!(report.epoch_losses[19] < report.epoch_losses[0], "{:?}", report.epoch_losses);
}

#[test]
fn zero_epochs_keeps_the_initial_model() {
    let mut cfg = tiny::config();
    cfg.stage1.epochs = 0;
    let s = Setup::new(cfg);
    let prepared = s.prepared(&s.train, Perspective::Cons);
    let init = init_summarizer(&s.shared.vocab, Perspective::Cons, &s.cfg);
    let (model, report) =
        train_stage1(init.clone(), &prepared, Perspective::Cons, Strategy::SentimentRandom, &s.cfg).unwrap();
    assert_eq!(model, init);
    assert!(report.epoch_losses.is_empty());
}

#[test]
fn training_and_candidates_are_deterministic() {
    let s = Setup::new(tiny::config());
    let p = Perspective::Verdict;
    let prepared = s.prepared(&s.train, p);
    let run = || {
        let init = init_summarizer(&s.shared.vocab, p, &s.cfg);
        let (m1, _) = train_stage1(init, &prepared, p, s.cfg.strategies.stage1, &s.cfg).unwrap();
        let cands = gen_all_candidates(&m1, &s.shared.vocab, &prepared, p, &s.cfg).unwrap();
        let (m2, _) = train_stage2(m1.clone(), &s.shared.vocab, &prepared, &cands, p, &s.cfg).unwrap();
        (bits(m1.params()), cands, bits(m2.params()))
    };
    assert_eq!(run(), run());
}

#[test]
fn zero_gamma_ignores_the_ranking_loss() {
    let mut cfg = tiny::config();
    cfg.gamma.pros = 0.0;
    let s = Setup::new(cfg);
    let p = Perspective::Pros;
    let prepared = s.prepared(&s.train, p);
    let init = init_summarizer(&s.shared.vocab, p, &s.cfg);
    let (m1, _) = train_stage1(init, &prepared, p, s.cfg.strategies.stage1, &s.cfg).unwrap();
    let cands = gen_all_candidates(&m1, &s.shared.vocab, &prepared, p, &s.cfg).unwrap();
    let (a, _) = train_stage2(m1.clone(), &s.shared.vocab, &prepared, &cands, p, &s.cfg).unwrap();
    // reversing every candidate ranking changes nothing when the ranking term is off
    let flipped: Vec<CandidateSet> = cands
        .iter()
        .map(|set| {
            let mut set = set.clone();
            set.candidates.iter_mut().for_each(|c| c.rouge_mean = -c.rouge_mean);
            set
        })
        .collect();
    let mut wide = s.cfg.clone();
    wide.lambda_ctr = 0.5;
    let (b, _) = train_stage2(m1.clone(), &s.shared.vocab, &prepared, &flipped, p, &wide).unwrap();
    assert_eq!(bits(a.params()), bits(b.params()));
    assert_ne!(bits(a.params()), bits(m1.params()));
}

#[test]
fn candidates_spread_in_rouge() {
    // needs a model that actually reads its input
    let mut cfg = tiny::config();
    cfg.model = subsumm::config::ModelSettings::default();
    cfg.synth = GenConfig { entities: 60, ..GenConfig::default() };
    cfg.stage1.epochs = 10;
    cfg.stage1.batch_size = 1;
    cfg.m = 8;
    let s = Setup::new(cfg);
    let p = Perspective::Pros;
    let prepared = s.prepared(&s.train, p);
    let init = init_summarizer(&s.shared.vocab, p, &s.cfg);
    let (m1, _) = train_stage1(init, &prepared, p, s.cfg.strategies.stage1, &s.cfg).unwrap();
    let cands = gen_all_candidates(&m1, &s.shared.vocab, &prepared, p, &s.cfg).unwrap();
    let spread = cands
        .iter()
        .filter(|set| {
            let r: Vec<f64> = set.candidates.iter().map(|c| c.rouge_mean).collect();
            let max = r.iter().copied().fold(f64::MIN, f64::max);
            let min = r.iter().copied().fold(f64::MAX, f64::min);
            max - min > 0.0
        })
        .count();
    assert!(spread as f64 >= 0.8 * cands.len() as f64, "{spread} of {}", cands.len());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("candidates/train-pros.jsonl");
    write_jsonl(&path, &cands).unwrap();
    assert_eq!(read_jsonl::<CandidateSet>(&path).unwrap(), cands);
}

#[test]
fn inference_audit_is_consistent() {
    let s = Setup::new(tiny::config());
    let p = Perspective::Cons;
    let prepared = s.prepared(&s.test, p);
    let init = init_summarizer(&s.shared.vocab, p, &s.cfg);
    let (m1, _) = train_stage1(init, &s.prepared(&s.train, p), p, s.cfg.strategies.stage1, &s.cfg).unwrap();
    for entity in &prepared {
        let a = infer_prepared(&m1, &s.shared.vocab, entity, p, Strategy::SentimentInfo, &s.cfg).unwrap();
        assert_eq!(a, infer_prepared(&m1, &s.shared.vocab, entity, p, Strategy::SentimentInfo, &s.cfg).unwrap());
        assert_eq!(a.seed, None);
        assert_eq!(a.subset_ids.len(), s.cfg.k);
        let q = a.quota.unwrap();
        let neg = a.subset_ids.iter().filter(|&&i| a.polarities[i] == subsumm::sentiment::Polarity::Negative).count();
        assert_eq!(neg, q.k_neg);
        assert!(a.summary_tokens.len() >= 4 && a.summary_tokens.len() <= 10);
        assert!(a.lh <= 0.0 && a.loglik <= a.lh);
    }
}
