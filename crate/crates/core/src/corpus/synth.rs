//! Synthetic review corpora with planted ground truth.
//!
//! Every entity gets a handful of "key" aspect tokens per perspective. The
//! pros keys come from a global positive aspect pool and the cons keys from
//! a disjoint negative pool. Key phrases are planted into a known subset of
//! reviews of the matching polarity and the reference summaries are built
//! from the same phrases, so the best review subset for each perspective is
//! known by construction.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, Entity, Perspective, Reference, Review, Split};
use crate::seed::{derive_seed, rng_from_seed};
use crate::sentiment::{polarity_of, Polarity};

const POSITIVE_WORDS: [&str; 8] = [
    "great", "excellent", "love", "perfect", "sturdy", "reliable", "happy", "solid",
];
const NEGATIVE_WORDS: [&str; 8] = [
    "poor", "broken", "awful", "flimsy", "cheap", "returned", "disappointing", "useless",
];
const CONNECTIVES: [&str; 6] = ["and", "with", "plus", "also", "very", "really"];

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn syllable(i: usize) -> [u8; 2] {
    let n = CONSONANTS.len();
    [CONSONANTS[i % n], VOWELS[(i / n) % VOWELS.len()]]
}

fn pseudo_word(i: usize, syllables: usize, suffix: &str) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut out = String::new();
    let mut rest = i;
    for _ in 0..syllables {
        out.extend(syllable(rest % base).iter().map(|&b| b as char));
        rest /= base;
    }
    out.push_str(suffix);
    out
}

/// Positive aspect pool: two syllables ending in `on`.
pub(crate) fn positive_aspect(i: usize) -> String {
    pseudo_word(i, 2, "on")
}

/// Negative aspect pool: two syllables ending in `ix`.
pub(crate) fn negative_aspect(i: usize) -> String {
    pseudo_word(i, 2, "ix")
}

/// Neutral filler pool: three open syllables.
pub(crate) fn filler(i: usize) -> String {
    pseudo_word(i, 3, "")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub entities: usize,
    pub reviews_per_entity: usize,
    pub rating_max: u32,
    /// Relative weight of each rating `1..=rating_max`.
    pub rating_weights: Vec<f64>,
    pub planted_per_perspective: usize,
    pub keys_per_summary: usize,
    pub aspect_pool_size: usize,
    pub filler_pool_size: usize,
    pub filler_per_review: (usize, usize),
    /// Probability that a planted review carries any given key phrase.
    pub key_keep_prob: f64,
    pub entity_prefix: String,
    pub split: Split,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            entities: 50,
            reviews_per_entity: 40,
            rating_max: 5,
            rating_weights: vec![0.15, 0.15, 0.15, 0.2, 0.35],
            planted_per_perspective: 5,
            keys_per_summary: 6,
            aspect_pool_size: 30,
            filler_pool_size: 150,
            filler_per_review: (6, 12),
            key_keep_prob: 0.8,
            entity_prefix: "syn".into(),
            split: Split::Train,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |msg: &str| Err(CorpusError::InvalidGenConfig(msg.to_owned()));
        if self.entities == 0 || self.reviews_per_entity == 0 {
            return bad("entities and reviews_per_entity must be positive");
        }
        if self.rating_max < 2 {
            return bad("rating_max must be at least 2");
        }
        if self.rating_weights.len() != self.rating_max as usize {
            return bad("rating_weights must have rating_max entries");
        }
        if self
            .rating_weights
            .iter()
            .any(|w| !w.is_finite() || *w < 0.0)
            || self.rating_weights.iter().sum::<f64>() <= 0.0
        {
            return bad("rating_weights must be non-negative with positive sum");
        }
        if self.keys_per_summary < 2 || self.keys_per_summary > self.aspect_pool_size {
            return bad("keys_per_summary must be in 2..=aspect_pool_size");
        }
        if self.filler_pool_size == 0 {
            return bad("filler_pool_size must be positive");
        }
        let (lo, hi) = self.filler_per_review;
        if lo == 0 || lo > hi {
            return bad("filler_per_review must satisfy 1 <= min <= max");
        }
        if !(0.0..=1.0).contains(&self.key_keep_prob) {
            return bad("key_keep_prob must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Ground truth recorded by the generator for one entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityOracle {
    pub entity_id: String,
    /// Polarity implied by each review's rating.
    pub polarities: Vec<Polarity>,
    /// Reviews carrying the key phrases of each perspective, ascending.
    pub planted: BTreeMap<Perspective, Vec<usize>>,
    pub keys: BTreeMap<Perspective, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub oracle: Vec<EntityOracle>,
}

struct KeyPhrases {
    keys: Vec<String>,
    connectives: Vec<&'static str>,
}

impl KeyPhrases {
    fn draw(rng: &mut ChaCha8Rng, n: usize, pool: usize, word: fn(usize) -> String) -> Self {
        let keys = rand::seq::index::sample(rng, pool, n)
            .into_iter()
            .map(word)
            .collect::<Vec<_>>();
        let connectives = (0..n)
            .map(|_| *CONNECTIVES.choose(rng).unwrap())
            .collect();
        KeyPhrases { keys, connectives }
    }

    /// `k0 c0 k1 c1 ... k_last` over the first `n` keys.
    fn sentence(&self, n: usize) -> Vec<String> {
        let mut out = Vec::new();
        for j in 0..n {
            out.push(self.keys[j].clone());
            if j + 1 < n {
                out.push(self.connectives[j].to_owned());
            }
        }
        out
    }

    fn phrase(&self, j: usize) -> Vec<String> {
        vec![self.keys[j].clone(), self.connectives[j].to_owned()]
    }
}

fn render(chunks: Vec<Vec<String>>) -> String {
    let mut text = chunks.concat().join(" ");
    if let Some(first) = text.get(0..1) {
        let upper = first.to_uppercase();
        text.replace_range(0..1, &upper);
    }
    text.push('.');
    text
}

fn generate_entity(cfg: &GenConfig, seed: u64, index: usize) -> (Entity, EntityOracle) {
    let entity_id = format!("{}-{:05}", cfg.entity_prefix, index);
    let mut rng = rng_from_seed(derive_seed(seed, "synth", &entity_id, index as u64));
    let n = cfg.reviews_per_entity;

    let total: f64 = cfg.rating_weights.iter().sum();
    let ratings: Vec<u32> = (0..n)
        .map(|_| {
            let mut u = rng.gen::<f64>() * total;
            for (r, w) in cfg.rating_weights.iter().enumerate() {
                if u < *w {
                    return r as u32 + 1;
                }
                u -= w;
            }
            cfg.rating_max
        })
        .collect();
    let polarities: Vec<Polarity> = ratings
        .iter()
        .map(|&r| polarity_of(r, cfg.rating_max))
        .collect();
    let positives: Vec<usize> = (0..n)
        .filter(|&i| polarities[i] == Polarity::Positive)
        .collect();
    let negatives: Vec<usize> = (0..n)
        .filter(|&i| polarities[i] == Polarity::Negative)
        .collect();

    let pros = KeyPhrases::draw(&mut rng, cfg.keys_per_summary, cfg.aspect_pool_size, positive_aspect);
    let cons = KeyPhrases::draw(&mut rng, cfg.keys_per_summary, cfg.aspect_pool_size, negative_aspect);
    let pros_word = *POSITIVE_WORDS.choose(&mut rng).unwrap();
    let cons_word = *NEGATIVE_WORDS.choose(&mut rng).unwrap();

    let mut pick = |pool: &[usize]| {
        let mut ids: Vec<usize> = pool
            .choose_multiple(&mut rng, cfg.planted_per_perspective.min(pool.len()))
            .copied()
            .collect();
        ids.sort_unstable();
        ids
    };
    let pros_planted = pick(&positives);
    let cons_planted = pick(&negatives);

    let reviews = (0..n)
        .map(|id| {
            let words: &[&str] = match polarities[id] {
                Polarity::Positive => &POSITIVE_WORDS,
                Polarity::Negative => &NEGATIVE_WORDS,
            };
            let mut chunks: Vec<Vec<String>> = Vec::new();
            for _ in 0..rng.gen_range(1..=2) {
                chunks.push(vec![(*words.choose(&mut rng).unwrap()).to_owned()]);
            }
            let (lo, hi) = cfg.filler_per_review;
            for _ in 0..rng.gen_range(lo..=hi) {
                chunks.push(vec![filler(rng.gen_range(0..cfg.filler_pool_size))]);
            }
            let planted = if pros_planted.binary_search(&id).is_ok() {
                Some(&pros)
            } else if cons_planted.binary_search(&id).is_ok() {
                Some(&cons)
            } else {
                None
            };
            if let Some(phrases) = planted {
                let mut kept = 0;
                for j in 0..cfg.keys_per_summary {
                    if rng.gen_bool(cfg.key_keep_prob) {
                        chunks.push(phrases.phrase(j));
                        kept += 1;
                    }
                }
                // every planted review carries at least one key phrase
                if kept == 0 {
                    chunks.push(phrases.phrase(rng.gen_range(0..cfg.keys_per_summary)));
                }
            }
            chunks.shuffle(&mut rng);
            Review::new(id, render(chunks), ratings[id])
        })
        .collect::<Vec<_>>();

    let half = cfg.keys_per_summary.div_ceil(2);
    let mut pros_ref = vec![pros_word.to_owned()];
    pros_ref.extend(pros.sentence(cfg.keys_per_summary));
    let mut cons_ref = vec![cons_word.to_owned()];
    cons_ref.extend(cons.sentence(cfg.keys_per_summary));
    let overall = if positives.len() >= negatives.len() {
        pros_word
    } else {
        cons_word
    };
    let mut verdict_ref = vec![overall.to_owned()];
    verdict_ref.extend(pros.sentence(half));
    verdict_ref.push("but".into());
    verdict_ref.extend(cons.sentence(half));

    let mut verdict_planted: Vec<usize> = pros_planted.iter().chain(&cons_planted).copied().collect();
    verdict_planted.sort_unstable();

    let summaries = BTreeMap::from([
        (Perspective::Pros, Reference::new(render(vec![pros_ref]))),
        (Perspective::Cons, Reference::new(render(vec![cons_ref]))),
        (Perspective::Verdict, Reference::new(render(vec![verdict_ref]))),
    ]);
    let keys = BTreeMap::from([
        (Perspective::Pros, pros.keys.clone()),
        (Perspective::Cons, cons.keys.clone()),
        (
            Perspective::Verdict,
            pros.keys[..half].iter().chain(&cons.keys[..half]).cloned().collect(),
        ),
    ]);
    let planted = BTreeMap::from([
        (Perspective::Pros, pros_planted),
        (Perspective::Cons, cons_planted),
        (Perspective::Verdict, verdict_planted),
    ]);

    let entity = Entity {
        entity_id: entity_id.clone(),
        reviews,
        summaries,
    };
    let oracle = EntityOracle {
        entity_id,
        polarities,
        planted,
        keys,
    };
    (entity, oracle)
}

/// Generates a corpus deterministically from `cfg` and `seed`.
pub fn generate_synthetic(cfg: &GenConfig, seed: u64) -> Result<SyntheticCorpus, CorpusError> {
    cfg.validate()?;
    let (entities, oracle) = (0..cfg.entities)
        .map(|i| generate_entity(cfg, seed, i))
        .unzip();
    Ok(SyntheticCorpus {
        corpus: Corpus {
            entities,
            split: cfg.split,
            rating_max: cfg.rating_max,
        },
        oracle,
    })
}
