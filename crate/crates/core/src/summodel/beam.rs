//! Beam search with trigram blocking, a minimum length and length-penalized
//! reranking of finished hypotheses.

use serde::{Deserialize, Serialize};

use super::{scored_length, ModelError, SummarizerModel};
use crate::corpus::{TokenId, BOS, EOS, PAD, SEP, UNK};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub beam: usize,
    /// Minimum number of generated tokens before EOS is allowed.
    pub min_len: usize,
    /// Maximum number of generated tokens; EOS is forced afterwards.
    pub max_len: usize,
    pub lenpen: f64,
    pub trigram_blocking: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam: 5,
            min_len: 25,
            max_len: 80,
            lenpen: 1.0,
            trigram_blocking: true,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.beam == 0 {
            return Err(ModelError::InvalidDecodeConfig("beam must be at least 1"));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(ModelError::InvalidDecodeConfig("need 1 <= min_len <= max_len"));
        }
        if !self.lenpen.is_finite() {
            return Err(ModelError::InvalidDecodeConfig("lenpen must be finite"));
        }
        Ok(())
    }
}

/// A decoded sequence, without BOS and EOS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    /// Sum of log-probabilities including the final EOS.
    pub loglik: f64,
    /// `loglik / (len + 1)^lenpen`.
    pub score: f64,
}

fn never_generated(t: TokenId) -> bool {
    matches!(t, PAD | BOS | UNK | SEP)
}

fn repeats_trigram(tokens: &[TokenId], next: TokenId) -> bool {
    let n = tokens.len();
    if n < 2 {
        return false;
    }
    let (a, b) = (tokens[n - 2], tokens[n - 1]);
    tokens.windows(3).any(|w| w == [a, b, next])
}

fn allowed(tokens: &[TokenId], t: TokenId, cfg: &DecodeConfig) -> bool {
    if never_generated(t) {
        return false;
    }
    if t == EOS {
        return tokens.len() >= cfg.min_len;
    }
    tokens.len() < cfg.max_len && !(cfg.trigram_blocking && repeats_trigram(tokens, t))
}

fn finish(tokens: Vec<TokenId>, loglik: f64, lenpen: f64) -> Hypothesis {
    let score = loglik / (scored_length(&tokens) as f64).powf(lenpen);
    Hypothesis { tokens, loglik, score }
}

fn by_score(a: &Hypothesis, b: &Hypothesis) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.tokens.cmp(&b.tokens))
}

/// Every finished hypothesis, best first.
pub fn beam_search_all(
    model: &SummarizerModel,
    reviews: &[Vec<TokenId>],
    cfg: &DecodeConfig,
) -> Result<Vec<Hypothesis>, ModelError> {
    cfg.validate()?;
    let ctx = model.encode_input(reviews)?;
    let decoder = model.decoder(&ctx);
    let mut live: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
    let mut finished: Vec<Hypothesis> = Vec::new();

    while !live.is_empty() && finished.len() < cfg.beam {
        let mut expansions: Vec<(f64, usize, TokenId)> = Vec::new();
        for (h, (tokens, loglik)) in live.iter().enumerate() {
            let lp = decoder.logprobs(*tokens.last().unwrap_or(&BOS));
            for t in 0..decoder.vocab() as TokenId {
                if allowed(tokens, t, cfg) {
                    expansions.push((loglik + lp[t as usize], h, t));
                }
            }
        }
        expansions.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| live[a.1].0.cmp(&live[b.1].0))
                .then(a.2.cmp(&b.2))
        });
        let mut next = Vec::with_capacity(cfg.beam);
        for (rank, &(loglik, h, t)) in expansions.iter().enumerate() {
            if rank >= cfg.beam && next.len() >= cfg.beam {
                break;
            }
            if t == EOS {
                if rank < cfg.beam {
                    finished.push(finish(live[h].0.clone(), loglik, cfg.lenpen));
                }
            } else if next.len() < cfg.beam {
                let mut tokens = live[h].0.clone();
                tokens.push(t);
                next.push((tokens, loglik));
            }
        }
        live = next;
    }

    if finished.is_empty() {
        return Err(ModelError::DecodeFailure);
    }
    finished.sort_by(by_score);
    Ok(finished)
}

pub fn beam_search(
    model: &SummarizerModel,
    reviews: &[Vec<TokenId>],
    cfg: &DecodeConfig,
) -> Result<Hypothesis, ModelError> {
    Ok(beam_search_all(model, reviews, cfg)?.swap_remove(0))
}

/// Beam search that retries without trigram blocking when every hypothesis
/// was pruned. The flag reports whether the retry was needed.
pub fn decode_with_fallback(
    model: &SummarizerModel,
    reviews: &[Vec<TokenId>],
    cfg: &DecodeConfig,
) -> Result<(Hypothesis, bool), ModelError> {
    match beam_search(model, reviews, cfg) {
        Err(ModelError::DecodeFailure) if cfg.trigram_blocking => {
            let relaxed = DecodeConfig {
                trigram_blocking: false,
                ..*cfg
            };
            Ok((beam_search(model, reviews, &relaxed)?, true))
        }
        other => Ok((other?, false)),
    }
}

/// Picks the most likely allowed token at every step; ties go to the lower id.
pub fn greedy_decode(
    model: &SummarizerModel,
    reviews: &[Vec<TokenId>],
    cfg: &DecodeConfig,
) -> Result<Hypothesis, ModelError> {
    cfg.validate()?;
    let ctx = model.encode_input(reviews)?;
    let decoder = model.decoder(&ctx);
    let mut tokens = Vec::new();
    let mut loglik = 0.0;
    loop {
        let lp = decoder.logprobs(*tokens.last().unwrap_or(&BOS));
        let best = (0..decoder.vocab() as TokenId)
            .filter(|&t| allowed(&tokens, t, cfg))
            .fold(None, |best: Option<TokenId>, t| match best {
                Some(b) if lp[b as usize] >= lp[t as usize] => Some(b),
                _ => Some(t),
            })
            .ok_or(ModelError::DecodeFailure)?;
        loglik += lp[best as usize];
        if best == EOS {
            return Ok(finish(tokens, loglik, cfg.lenpen));
        }
        tokens.push(best);
    }
}
