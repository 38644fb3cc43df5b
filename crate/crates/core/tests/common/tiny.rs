//! A small synthetic setup that trains in seconds.

use subsumm::config::RunConfig;
use subsumm::corpus::{generate_synthetic, Corpus, GenConfig, Perspective, Split};
use subsumm::eval::{train_shared, SharedModels};
use subsumm::pipeline::{prepare, Prepared};

pub fn config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.m = 4;
    cfg.model.embed = 12;
    cfg.model.ctx = 12;
    cfg.model.hidden = 16;
    cfg.stage1.epochs = 4;
    cfg.stage1.batch_size = 2;
    cfg.stage2.epochs = 2;
    cfg.stage2.batch_size = 2;
    cfg.decode.min_len = subsumm::config::PerPerspective { pros: 4, cons: 4, verdict: 4 };
    cfg.decode.max_len = 10;
    cfg.valuation.epochs = 3;
    cfg.sentiment.epochs = 5;
    cfg.synth = GenConfig { entities: 24, ..GenConfig::default() };
    cfg
}

pub fn corpus(cfg: &RunConfig, split: Split, seed: u64) -> Corpus {
    let gen = GenConfig {
        split,
        entity_prefix: split.as_str().into(),
        ..cfg.synth.clone()
    };
    generate_synthetic(&gen, seed).unwrap().corpus
}

pub struct Setup {
    pub cfg: RunConfig,
    pub train: Corpus,
    pub test: Corpus,
    pub shared: SharedModels,
}

impl Setup {
    pub fn new(cfg: RunConfig) -> Setup {
        let train = corpus(&cfg, Split::Train, 1);
        let test = corpus(&cfg, Split::Test, 2);
        let shared = train_shared(&train, &Perspective::ALL, &cfg).unwrap();
        Setup { cfg, train, test, shared }
    }

    pub fn prepared(&self, corpus: &Corpus, p: Perspective) -> Vec<Prepared> {
        let s = &self.shared;
        prepare(corpus, &s.vocab, &s.sentiment, Some(s.scorer(p)), p, &self.cfg).unwrap()
    }
}
