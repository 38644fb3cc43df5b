use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;
pub const SEP: TokenId = 4;

/// Surface forms of the reserved ids, in id order. None of them can be
/// produced by `tokenize`, so they never collide with corpus tokens.
pub const RESERVED: [&str; 5] = ["<pad>", "<bos>", "<eos>", "<unk>", "<sep>"];

/// Bijective token/id map. Ids `0..5` are the reserved tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Vocab { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Builds a vocabulary over review and reference tokens. Tokens below
    /// `min_freq` are dropped; the rest are ordered by frequency descending,
    /// then lexicographically.
    pub fn build(corpus: &Corpus, min_freq: usize) -> Result<Vocab, CorpusError> {
        if min_freq < 1 {
            return Err(CorpusError::InvalidMinFreq);
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for entity in &corpus.entities {
            let reviews = entity.reviews.iter().map(|r| &r.tokens);
            let refs = entity.summaries.values().map(|r| &r.tokens);
            for tokens in reviews.chain(refs) {
                for t in tokens {
                    *counts.entry(t.as_str()).or_default() += 1;
                }
            }
        }
        if counts.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut kept: Vec<(&str, usize)> =
            counts.into_iter().filter(|&(_, c)| c >= min_freq).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t.to_owned()))
            .collect::<Vec<_>>();
        Ok(Vocab::from(tokens))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Maps tokens to ids, sending out-of-vocabulary tokens to `UNK`.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TokenId> {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(UNK))
            .collect()
    }

    /// Maps ids back to tokens, skipping reserved ids.
    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter()
            .filter(|&&id| id as usize >= RESERVED.len())
            .filter_map(|&id| self.token(id).map(str::to_owned))
            .collect()
    }

    /// Concatenates reviews with the separator token between them.
    pub fn join_with_sep<S: AsRef<str>>(&self, reviews: &[&[S]]) -> Vec<TokenId> {
        let mut out = Vec::new();
        for (i, r) in reviews.iter().enumerate() {
            if i > 0 {
                out.push(SEP);
            }
            out.extend(self.encode(r));
        }
        out
    }
}
