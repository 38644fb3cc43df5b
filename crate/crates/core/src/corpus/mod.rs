//! Review corpora: data model, JSONL ingestion, tokenization and vocabularies.
//!
//! A corpus file holds one entity per line. An optional first line of the
//! form `{"meta": {"rating_max": 5}}` declares the rating scale; without it
//! ratings are assumed to lie in `1..=5`.

mod synth;
mod vocab;

pub use synth::{generate_synthetic, EntityOracle, GenConfig, SyntheticCorpus};
pub use vocab::{TokenId, Vocab, BOS, EOS, PAD, RESERVED, SEP, UNK};

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_RATING_MAX: u32 = 5;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed JSON: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: missing field `{name}`")]
    MissingField { line: usize, name: String },
    #[error("line {line}: review {review} has rating {rating} outside 1..={rating_max}")]
    RatingOutOfRange {
        line: usize,
        review: usize,
        rating: i64,
        rating_max: u32,
    },
    #[error("line {line}: entity has no reviews")]
    EmptyReviewSet { line: usize },
    #[error("line {line}: review {review} is empty")]
    EmptyReviewText { line: usize, review: usize },
    #[error("line {line}: entity has no reference summary")]
    NoReference { line: usize },
    #[error("line {line}: duplicate entity id `{entity_id}`")]
    DuplicateEntity { line: usize, entity_id: String },
    #[error("corpus has no tokens")]
    EmptyCorpus,
    #[error("min_freq must be at least 1")]
    InvalidMinFreq,
    #[error("invalid generator config: {0}")]
    InvalidGenConfig(String),
    #[error("unknown {what} `{value}`")]
    UnknownName { what: &'static str, value: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lowercases `text` and splits it on maximal runs of non-alphanumeric
/// characters, dropping empty pieces.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Perspective {
    Pros,
    Cons,
    Verdict,
}

impl Perspective {
    pub const ALL: [Perspective; 3] = [Perspective::Pros, Perspective::Cons, Perspective::Verdict];

    pub fn as_str(self) -> &'static str {
        match self {
            Perspective::Pros => "pros",
            Perspective::Cons => "cons",
            Perspective::Verdict => "verdict",
        }
    }
}

impl fmt::Display for Perspective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Perspective {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pros" => Ok(Perspective::Pros),
            "cons" => Ok(Perspective::Cons),
            "verdict" => Ok(Perspective::Verdict),
            other => Err(CorpusError::UnknownName {
                what: "perspective",
                value: other.to_owned(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(CorpusError::UnknownName {
                what: "split",
                value: other.to_owned(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Review {
    pub id: usize,
    pub text: String,
    pub rating: u32,
    pub tokens: Vec<String>,
}

impl Review {
    pub fn new(id: usize, text: impl Into<String>, rating: u32) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Review {
            id,
            text,
            rating,
            tokens,
        }
    }
}

/// A reference summary, kept verbatim alongside its tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub text: String,
    pub tokens: Vec<String>,
}

impl Reference {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Reference { text, tokens }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub entity_id: String,
    pub reviews: Vec<Review>,
    pub summaries: BTreeMap<Perspective, Reference>,
}

impl Entity {
    /// Reference tokens for `perspective`, if the entity has one.
    pub fn reference(&self, perspective: Perspective) -> Option<&[String]> {
        self.summaries
            .get(&perspective)
            .map(|r| r.tokens.as_slice())
            .filter(|t| !t.is_empty())
    }

    pub fn review_tokens(&self, ids: &[usize]) -> Vec<&[String]> {
        ids.iter().map(|&i| self.reviews[i].tokens.as_slice()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub entities: Vec<Entity>,
    pub split: Split,
    pub rating_max: u32,
}

impl Corpus {
    pub fn review_count(&self) -> usize {
        self.entities.iter().map(|e| e.reviews.len()).sum()
    }

    /// Entities carrying a reference for `perspective`.
    pub fn with_reference(&self, perspective: Perspective) -> impl Iterator<Item = &Entity> {
        self.entities
            .iter()
            .filter(move |e| e.reference(perspective).is_some())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let meta = MetaLine {
            meta: Meta {
                rating_max: self.rating_max,
            },
        };
        serde_json::to_writer(&mut out, &meta)?;
        out.write_all(b"\n")?;
        for entity in &self.entities {
            serde_json::to_writer(&mut out, &RawEntityOut::from(entity))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let file = fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_jsonl(&mut out)?;
        out.flush()?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    rating_max: u32,
}

#[derive(Serialize, Deserialize)]
struct MetaLine {
    meta: Meta,
}

#[derive(Deserialize)]
struct RawReview {
    text: Option<String>,
    rating: Option<i64>,
}

#[derive(Deserialize)]
struct RawSummaries {
    pros: Option<String>,
    cons: Option<String>,
    verdict: Option<String>,
}

#[derive(Deserialize)]
struct RawEntity {
    entity_id: Option<String>,
    reviews: Option<Vec<RawReview>>,
    summaries: Option<RawSummaries>,
}

#[derive(Serialize)]
struct RawReviewOut<'a> {
    text: &'a str,
    rating: u32,
}

#[derive(Serialize)]
struct RawSummariesOut<'a> {
    pros: Option<&'a str>,
    cons: Option<&'a str>,
    verdict: Option<&'a str>,
}

#[derive(Serialize)]
struct RawEntityOut<'a> {
    entity_id: &'a str,
    reviews: Vec<RawReviewOut<'a>>,
    summaries: RawSummariesOut<'a>,
}

impl<'a> From<&'a Entity> for RawEntityOut<'a> {
    fn from(e: &'a Entity) -> Self {
        let get = |p| e.summaries.get(&p).map(|r: &Reference| r.text.as_str());
        RawEntityOut {
            entity_id: &e.entity_id,
            reviews: e
                .reviews
                .iter()
                .map(|r| RawReviewOut {
                    text: &r.text,
                    rating: r.rating,
                })
                .collect(),
            summaries: RawSummariesOut {
                pros: get(Perspective::Pros),
                cons: get(Perspective::Cons),
                verdict: get(Perspective::Verdict),
            },
        }
    }
}

fn missing(line: usize, name: &str) -> CorpusError {
    CorpusError::MissingField {
        line,
        name: name.to_owned(),
    }
}

fn parse_entity(raw: RawEntity, line: usize, rating_max: u32) -> Result<Entity, CorpusError> {
    let entity_id = raw.entity_id.ok_or_else(|| missing(line, "entity_id"))?;
    let raw_reviews = raw.reviews.ok_or_else(|| missing(line, "reviews"))?;
    let raw_summaries = raw.summaries.ok_or_else(|| missing(line, "summaries"))?;
    if raw_reviews.is_empty() {
        return Err(CorpusError::EmptyReviewSet { line });
    }

    let mut reviews = Vec::with_capacity(raw_reviews.len());
    for (id, r) in raw_reviews.into_iter().enumerate() {
        let text = r.text.ok_or_else(|| missing(line, "reviews[].text"))?;
        let rating = r.rating.ok_or_else(|| missing(line, "reviews[].rating"))?;
        if rating < 1 || rating > i64::from(rating_max) {
            return Err(CorpusError::RatingOutOfRange {
                line,
                review: id,
                rating,
                rating_max,
            });
        }
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyReviewText { line, review: id });
        }
        reviews.push(Review::new(id, text, rating as u32));
    }

    let mut summaries = BTreeMap::new();
    for (p, text) in [
        (Perspective::Pros, raw_summaries.pros),
        (Perspective::Cons, raw_summaries.cons),
        (Perspective::Verdict, raw_summaries.verdict),
    ] {
        if let Some(text) = text {
            summaries.insert(p, Reference::new(text));
        }
    }
    if !summaries.values().any(|r| !r.tokens.is_empty()) {
        return Err(CorpusError::NoReference { line });
    }

    Ok(Entity {
        entity_id,
        reviews,
        summaries,
    })
}

/// Parses a JSONL corpus from a reader. Line numbers in errors are 1-based.
pub fn read_corpus<R: BufRead>(reader: R, split: Split) -> Result<Corpus, CorpusError> {
    let mut rating_max = DEFAULT_RATING_MAX;
    let mut entities = Vec::new();
    let mut seen = HashSet::new();
    let mut first = true;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedLine {
                line: line_no,
                reason: e.to_string(),
            })?;
        if first {
            first = false;
            if value.get("meta").is_some() {
                let meta: MetaLine =
                    serde_json::from_value(value).map_err(|e| CorpusError::MalformedLine {
                        line: line_no,
                        reason: e.to_string(),
                    })?;
                if meta.meta.rating_max < 1 {
                    return Err(CorpusError::MalformedLine {
                        line: line_no,
                        reason: "rating_max must be at least 1".into(),
                    });
                }
                rating_max = meta.meta.rating_max;
                continue;
            }
        }
        let raw: RawEntity =
            serde_json::from_value(value).map_err(|e| CorpusError::MalformedLine {
                line: line_no,
                reason: e.to_string(),
            })?;
        let entity = parse_entity(raw, line_no, rating_max)?;
        if !seen.insert(entity.entity_id.clone()) {
            return Err(CorpusError::DuplicateEntity {
                line: line_no,
                entity_id: entity.entity_id,
            });
        }
        entities.push(entity);
    }

    Ok(Corpus {
        entities,
        split,
        rating_max,
    })
}

pub fn load_corpus(path: impl AsRef<Path>, split: Split) -> Result<Corpus, CorpusError> {
    let file = fs::File::open(path)?;
    read_corpus(BufReader::new(file), split)
}
