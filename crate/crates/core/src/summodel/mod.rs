//! A small trainable conditional summarizer.
//!
//! The input review subset is pooled into a context vector (mean over
//! reviews of each review's mean token embedding, then a linear projection).
//! Each next-token distribution is
//!
//! ```text
//! h      = tanh(W_tok · E[prev] + W_ctx · ctx + b)
//! p(·)   = softmax(W_out · h + b_out)
//! ```
//!
//! Losses are the token-level cross entropy of the reference and a
//! rank-scaled pairwise margin loss over length-normalized log-likelihoods
//! of candidate summaries. All gradients are closed-form.

mod beam;

pub use beam::{beam_search, beam_search_all, decode_with_fallback, greedy_decode, DecodeConfig, Hypothesis};

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{TokenId, BOS, EOS};
use crate::ranking::{pairwise_margin_loss, Ranking, RankingError};
use crate::seed::rng_from_seed;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("review subset is empty")]
    EmptySubset,
    #[error("token id {id} outside vocabulary of size {vocab}")]
    UnknownToken { id: TokenId, vocab: usize },
    #[error("prefix must start with BOS")]
    MissingBos,
    #[error("summary is empty")]
    EmptySummary,
    #[error("every beam hypothesis was pruned")]
    DecodeFailure,
    #[error("invalid decode config: {0}")]
    InvalidDecodeConfig(&'static str),
    #[error("parameter vector has length {got}, expected {expected}")]
    ParamLength { got: usize, expected: usize },
    #[error(transparent)]
    Ranking(#[from] RankingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab: usize,
    pub embed: usize,
    pub ctx: usize,
    pub hidden: usize,
}

impl ModelDims {
    fn layout(&self) -> Layout {
        let ModelDims {
            vocab: v,
            embed: e,
            ctx: c,
            hidden: h,
        } = *self;
        let mut off = 0;
        let mut take = |n: usize| {
            let r = off..off + n;
            off += n;
            r
        };
        let embed = take(v * e);
        let ctx_proj = take(e * c);
        let hid_tok = take(h * e);
        let hid_ctx = take(h * c);
        let hid_bias = take(h);
        let out_w = take(v * h);
        let out_b = take(v);
        Layout {
            embed,
            ctx_proj,
            hid_tok,
            hid_ctx,
            hid_bias,
            out_w,
            out_b,
            total: off,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }
}

type Span = std::ops::Range<usize>;

/// Offsets of each parameter block in the flat vector. Matrices are
/// row-major: `embed` is `vocab x embed`, `ctx_proj` is `embed x ctx`,
/// `hid_tok` is `hidden x embed`, `hid_ctx` is `hidden x ctx` and `out_w`
/// is `vocab x hidden`.
#[derive(Debug, Clone)]
struct Layout {
    embed: Span,
    ctx_proj: Span,
    hid_tok: Span,
    hid_ctx: Span,
    hid_bias: Span,
    out_w: Span,
    out_b: Span,
    total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummarizerModel {
    dims: ModelDims,
    params: Vec<f64>,
}

/// Pooled representation of a review subset.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    /// Weight of each token's embedding in the pooled vector.
    pool_weights: Vec<(TokenId, f64)>,
    pooled: Vec<f64>,
    ctx: Vec<f64>,
}

impl Context {
    pub fn vector(&self) -> &[f64] {
        &self.ctx
    }

    pub fn pooled(&self) -> &[f64] {
        &self.pooled
    }
}

fn matvec(m: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &m[r * cols..(r + 1) * cols];
        out[r] += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += m^T x` for a row-major `rows x cols` matrix.
fn matvec_t(m: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        if x[r] == 0.0 {
            continue;
        }
        let row = &m[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * x[r];
        }
    }
}

/// `m += a ⊗ b` for a row-major `a.len() x b.len()` matrix.
fn outer_add(m: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    for (r, &ar) in a.iter().enumerate() {
        if ar == 0.0 {
            continue;
        }
        let row = &mut m[r * cols..(r + 1) * cols];
        for (x, bc) in row.iter_mut().zip(b) {
            *x += ar * bc;
        }
    }
}

fn log_softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    v.iter_mut().for_each(|x| *x -= lse);
}

/// Values of the training objective's terms for one example.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub xent: f64,
    pub ctr: f64,
    pub total: f64,
}

/// One training example: the input subset, the reference and, for the
/// contrastive term, ranked candidate summaries.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub reviews: &'a [Vec<TokenId>],
    pub reference: &'a [TokenId],
    pub candidates: &'a [Vec<TokenId>],
    /// Ranking of `candidates` by ROUGE against the reference.
    pub ranking: Option<&'a Ranking>,
}

/// Weights of the objective `xent_weight * xent + gamma * ctr`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub xent_weight: f64,
    pub gamma: f64,
    pub margin: f64,
    pub alpha: f64,
}

impl LossWeights {
    pub fn xent_only() -> Self {
        LossWeights {
            xent_weight: 1.0,
            gamma: 0.0,
            margin: 0.0,
            alpha: 1.0,
        }
    }

    pub fn ctr_only(margin: f64, alpha: f64) -> Self {
        LossWeights {
            xent_weight: 0.0,
            gamma: 1.0,
            margin,
            alpha,
        }
    }

    pub fn multitask(gamma: f64, margin: f64, alpha: f64) -> Self {
        LossWeights {
            xent_weight: 1.0,
            gamma,
            margin,
            alpha,
        }
    }
}

/// `loglik / length^alpha`.
pub fn length_norm_lik(loglik: f64, length: usize, alpha: f64) -> f64 {
    loglik / (length as f64).powf(alpha)
}

/// Pairwise margin loss over length-normalized likelihoods of candidates.
pub fn ctr_loss(lh: &[f64], ranking: &Ranking, margin: f64) -> Result<f64, ModelError> {
    Ok(pairwise_margin_loss(lh, ranking, margin)?.0)
}

pub fn multitask_loss(xent: f64, ctr: f64, gamma: f64) -> f64 {
    xent + gamma * ctr
}

/// Number of scored positions of a summary: its tokens plus EOS.
pub fn scored_length(summary: &[TokenId]) -> usize {
    summary.len() + 1
}

impl SummarizerModel {
    pub fn zeros(dims: ModelDims) -> Self {
        SummarizerModel {
            dims,
            params: vec![0.0; dims.param_count()],
        }
    }

    /// Embeddings uniform in `[-scale, scale]`, weight matrices uniform in
    /// `[-b, b]` with `b = sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init(dims: ModelDims, scale: f64, seed: u64) -> Self {
        Self::init_with_gain(dims, scale, 1.0, seed)
    }

    /// Like [`init`](Self::init), with the context projection's bound
    /// multiplied by `ctx_gain`. The pooled input is an average over many
    /// tokens and is therefore small; a larger projection keeps the
    /// context's share of the hidden pre-activation from vanishing.
    pub fn init_with_gain(dims: ModelDims, scale: f64, ctx_gain: f64, seed: u64) -> Self {
        let mut model = Self::zeros(dims);
        let layout = dims.layout();
        let mut rng = rng_from_seed(seed);
        let xavier = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
        let ModelDims {
            vocab: v,
            embed: e,
            ctx: c,
            hidden: h,
        } = dims;
        for (span, bound) in [
            (&layout.embed, scale),
            (&layout.ctx_proj, ctx_gain * xavier(e, c)),
            (&layout.hid_tok, xavier(e, h)),
            (&layout.hid_ctx, xavier(c, h)),
            (&layout.out_w, xavier(h, v)),
        ] {
            for p in &mut model.params[span.clone()] {
                *p = if bound > 0.0 { rng.gen_range(-bound..=bound) } else { 0.0 };
            }
        }
        model
    }

    pub fn from_params(dims: ModelDims, params: Vec<f64>) -> Result<Self, ModelError> {
        let expected = dims.param_count();
        if params.len() != expected {
            return Err(ModelError::ParamLength {
                got: params.len(),
                expected,
            });
        }
        Ok(SummarizerModel { dims, params })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Mutable access to one named block, for tests and hand-built models.
    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let l = self.dims.layout();
        let span = match name {
            "embed" => l.embed,
            "ctx_proj" => l.ctx_proj,
            "hid_tok" => l.hid_tok,
            "hid_ctx" => l.hid_ctx,
            "hid_bias" => l.hid_bias,
            "out_w" => l.out_w,
            "out_b" => l.out_b,
            _ => return None,
        };
        Some(&mut self.params[span])
    }

    fn check_ids(&self, ids: &[TokenId]) -> Result<(), ModelError> {
        match ids.iter().find(|&&id| id as usize >= self.dims.vocab) {
            Some(&id) => Err(ModelError::UnknownToken {
                id,
                vocab: self.dims.vocab,
            }),
            None => Ok(()),
        }
    }

    fn embedding(&self, layout: &Layout, id: TokenId) -> &[f64] {
        let e = self.dims.embed;
        let start = layout.embed.start + id as usize * e;
        &self.params[start..start + e]
    }

    /// Mean over non-empty reviews of each review's mean token embedding,
    /// projected to the context dimension.
    pub fn encode_input(&self, reviews: &[Vec<TokenId>]) -> Result<Context, ModelError> {
        if reviews.is_empty() {
            return Err(ModelError::EmptySubset);
        }
        for r in reviews {
            self.check_ids(r)?;
        }
        let nonempty = reviews.iter().filter(|r| !r.is_empty()).count();
        let mut weights: BTreeMap<TokenId, f64> = BTreeMap::new();
        for r in reviews.iter().filter(|r| !r.is_empty()) {
            let w = 1.0 / (nonempty as f64 * r.len() as f64);
            for &t in r {
                *weights.entry(t).or_insert(0.0) += w;
            }
        }
        let layout = self.dims.layout();
        let e = self.dims.embed;
        let mut pooled = vec![0.0; e];
        for (&t, &w) in &weights {
            for (p, x) in pooled.iter_mut().zip(self.embedding(&layout, t)) {
                *p += w * x;
            }
        }
        let mut ctx = vec![0.0; self.dims.ctx];
        matvec_t(&self.params[layout.ctx_proj.clone()], e, self.dims.ctx, &pooled, &mut ctx);
        Ok(Context {
            pool_weights: weights.into_iter().collect(),
            pooled,
            ctx,
        })
    }

    /// Context part of the hidden pre-activation: `W_ctx · ctx + b`.
    fn context_bias(&self, layout: &Layout, ctx: &Context) -> Vec<f64> {
        let mut hc = self.params[layout.hid_bias.clone()].to_vec();
        matvec(&self.params[layout.hid_ctx.clone()], self.dims.hidden, self.dims.ctx, &ctx.ctx, &mut hc);
        hc
    }

    /// Hidden activation and log-probabilities after token `prev`.
    fn step(&self, layout: &Layout, hc: &[f64], prev: TokenId) -> (Vec<f64>, Vec<f64>) {
        let ModelDims {
            vocab, embed, hidden, ..
        } = self.dims;
        let mut h = hc.to_vec();
        matvec(&self.params[layout.hid_tok.clone()], hidden, embed, self.embedding(layout, prev), &mut h);
        h.iter_mut().for_each(|x| *x = x.tanh());
        let mut logits = self.params[layout.out_b.clone()].to_vec();
        matvec(&self.params[layout.out_w.clone()], vocab, hidden, &h, &mut logits);
        log_softmax_in_place(&mut logits);
        (h, logits)
    }

    /// Next-token distribution after `prefix`, which must start with BOS.
    pub fn next_token_dist(&self, ctx: &Context, prefix: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        Ok(self
            .next_token_logprobs(ctx, prefix)?
            .into_iter()
            .map(f64::exp)
            .collect())
    }

    pub fn next_token_logprobs(&self, ctx: &Context, prefix: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        if prefix.first() != Some(&BOS) {
            return Err(ModelError::MissingBos);
        }
        self.check_ids(prefix)?;
        let layout = self.dims.layout();
        let hc = self.context_bias(&layout, ctx);
        Ok(self.step(&layout, &hc, *prefix.last().unwrap()).1)
    }

    /// Log-probabilities after `prev` with a precomputed context bias. Used
    /// by the decoder to avoid recomputing `W_ctx · ctx` at every step.
    pub(crate) fn decoder(&self, ctx: &Context) -> Decoder<'_> {
        let layout = self.dims.layout();
        let hc = self.context_bias(&layout, ctx);
        Decoder {
            model: self,
            layout,
            hc,
        }
    }

    /// Sum of log-probabilities of `summary` followed by EOS.
    pub fn seq_loglik(&self, ctx: &Context, summary: &[TokenId]) -> Result<f64, ModelError> {
        if summary.is_empty() {
            return Err(ModelError::EmptySummary);
        }
        self.check_ids(summary)?;
        let layout = self.dims.layout();
        let hc = self.context_bias(&layout, ctx);
        let mut total = 0.0;
        let mut prev = BOS;
        for &target in summary.iter().chain(std::iter::once(&EOS)) {
            total += self.step(&layout, &hc, prev).1[target as usize];
            prev = target;
        }
        Ok(total)
    }

    /// Cross entropy of the reference (plus EOS) given the subset.
    pub fn xent_loss(&self, ctx: &Context, reference: &[TokenId]) -> Result<f64, ModelError> {
        Ok(-self.seq_loglik(ctx, reference)?)
    }

    /// Length-normalized likelihood of each candidate given the subset.
    pub fn candidate_lh(&self, ctx: &Context, candidates: &[Vec<TokenId>], alpha: f64) -> Result<Vec<f64>, ModelError> {
        candidates
            .iter()
            .map(|c| Ok(length_norm_lik(self.seq_loglik(ctx, c)?, scored_length(c), alpha)))
            .collect()
    }

    /// Objective value without gradients.
    pub fn loss(&self, example: &Example<'_>, weights: &LossWeights) -> Result<LossValue, ModelError> {
        let ctx = self.encode_input(example.reviews)?;
        let xent = if weights.xent_weight != 0.0 {
            self.xent_loss(&ctx, example.reference)?
        } else {
            0.0
        };
        let ctr = match example.ranking {
            Some(ranking) if weights.gamma != 0.0 => {
                let lh = self.candidate_lh(&ctx, example.candidates, weights.alpha)?;
                ctr_loss(&lh, ranking, weights.margin)?
            }
            _ => 0.0,
        };
        Ok(LossValue {
            xent,
            ctr,
            total: weights.xent_weight * xent + weights.gamma * ctr,
        })
    }

    /// Objective value and its gradient with respect to every parameter.
    pub fn loss_and_grad(
        &self,
        example: &Example<'_>,
        weights: &LossWeights,
    ) -> Result<(LossValue, Vec<f64>), ModelError> {
        let ctx = self.encode_input(example.reviews)?;
        let layout = self.dims.layout();
        let hc = self.context_bias(&layout, &ctx);
        let mut grad = vec![0.0; self.params.len()];
        let mut dctx = vec![0.0; self.dims.ctx];

        let mut xent = 0.0;
        if weights.xent_weight != 0.0 {
            self.check_ids(example.reference)?;
            if example.reference.is_empty() {
                return Err(ModelError::EmptySummary);
            }
            xent = -self.backprop_sequence(&layout, &ctx, &hc, example.reference, weights.xent_weight, &mut grad, &mut dctx);
        }

        let mut ctr = 0.0;
        if let (Some(ranking), true) = (example.ranking, weights.gamma != 0.0) {
            let lh = self.candidate_lh(&ctx, example.candidates, weights.alpha)?;
            let (loss, dlh) = pairwise_margin_loss(&lh, ranking, weights.margin)?;
            ctr = loss;
            for (cand, g) in example.candidates.iter().zip(&dlh) {
                if *g == 0.0 {
                    continue;
                }
                // Lh = loglik / len^alpha, and backprop_sequence accumulates
                // coef * d(-loglik), hence the sign flip.
                let coef = -weights.gamma * g / (scored_length(cand) as f64).powf(weights.alpha);
                self.backprop_sequence(&layout, &ctx, &hc, cand, coef, &mut grad, &mut dctx);
            }
        }

        self.backprop_context(&layout, &ctx, &dctx, &mut grad);
        Ok((
            LossValue {
                xent,
                ctr,
                total: weights.xent_weight * xent + weights.gamma * ctr,
            },
            grad,
        ))
    }

    /// Adds `coef * d(-loglik(seq))/dθ` into `grad` (context path into
    /// `dctx`) and returns `loglik(seq)`.
    #[allow(clippy::too_many_arguments)]
    fn backprop_sequence(
        &self,
        layout: &Layout,
        ctx: &Context,
        hc: &[f64],
        seq: &[TokenId],
        coef: f64,
        grad: &mut [f64],
        dctx: &mut [f64],
    ) -> f64 {
        let ModelDims {
            vocab,
            embed,
            ctx: cdim,
            hidden,
        } = self.dims;
        let out_w = &self.params[layout.out_w.clone()];
        let hid_tok = &self.params[layout.hid_tok.clone()];
        let hid_ctx = &self.params[layout.hid_ctx.clone()];
        let mut loglik = 0.0;
        let mut prev = BOS;
        let mut dh = vec![0.0; hidden];
        for &target in seq.iter().chain(std::iter::once(&EOS)) {
            let (h, logp) = self.step(layout, hc, prev);
            loglik += logp[target as usize];

            // d(-log p_target)/dlogits = p - onehot(target)
            let mut delta: Vec<f64> = logp.iter().map(|l| coef * l.exp()).collect();
            delta[target as usize] -= coef;

            let gw = &mut grad[layout.out_w.clone()];
            outer_add(gw, &delta, &h);
            for (g, d) in grad[layout.out_b.clone()].iter_mut().zip(&delta) {
                *g += d;
            }

            dh.iter_mut().for_each(|x| *x = 0.0);
            matvec_t(out_w, vocab, hidden, &delta, &mut dh);
            let dz: Vec<f64> = dh.iter().zip(&h).map(|(d, hv)| d * (1.0 - hv * hv)).collect();

            let emb_prev = self.embedding(layout, prev).to_vec();
            outer_add(&mut grad[layout.hid_tok.clone()], &dz, &emb_prev);
            outer_add(&mut grad[layout.hid_ctx.clone()], &dz, &ctx.ctx);
            for (g, d) in grad[layout.hid_bias.clone()].iter_mut().zip(&dz) {
                *g += d;
            }
            let start = layout.embed.start + prev as usize * embed;
            matvec_t(hid_tok, hidden, embed, &dz, &mut grad[start..start + embed]);
            matvec_t(hid_ctx, hidden, cdim, &dz, dctx);
            prev = target;
        }
        loglik
    }

    /// Pushes the accumulated context gradient through the projection and
    /// the mean pooling into the embeddings.
    fn backprop_context(&self, layout: &Layout, ctx: &Context, dctx: &[f64], grad: &mut [f64]) {
        let e = self.dims.embed;
        let c = self.dims.ctx;
        outer_add(&mut grad[layout.ctx_proj.clone()], &ctx.pooled, dctx);
        let mut dpooled = vec![0.0; e];
        matvec(&self.params[layout.ctx_proj.clone()], e, c, dctx, &mut dpooled);
        for &(t, w) in &ctx.pool_weights {
            let start = layout.embed.start + t as usize * e;
            for (g, d) in grad[start..start + e].iter_mut().zip(&dpooled) {
                *g += w * d;
            }
        }
    }

    /// `params -= step * grad`, after rescaling `grad` to global L2 norm at
    /// most `clip` (when `clip > 0`). Returns the pre-clip norm.
    pub fn apply_gradient(&mut self, grad: &[f64], step: f64, clip: f64) -> f64 {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = if clip > 0.0 && norm > clip { clip / norm } else { 1.0 };
        for (p, g) in self.params.iter_mut().zip(grad) {
            *p -= step * scale * g;
        }
        norm
    }
}

pub(crate) struct Decoder<'m> {
    model: &'m SummarizerModel,
    layout: Layout,
    hc: Vec<f64>,
}

impl Decoder<'_> {
    pub(crate) fn logprobs(&self, prev: TokenId) -> Vec<f64> {
        self.model.step(&self.layout, &self.hc, prev).1
    }

    pub(crate) fn vocab(&self) -> usize {
        self.model.dims.vocab
    }
}
