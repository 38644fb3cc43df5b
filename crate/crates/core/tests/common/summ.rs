//! Tiny summarizer instances shared by the gradient and decoding tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subsumm::ranking::Ranking;
use subsumm::summodel::{DecodeConfig, Example, LossWeights, ModelDims, SummarizerModel};

use super::max_grad_error;

pub fn tiny_dims(rng: &mut ChaCha8Rng) -> ModelDims {
    ModelDims {
        vocab: rng.gen_range(6..=8),
        embed: rng.gen_range(2..=4),
        ctx: rng.gen_range(2..=4),
        hidden: rng.gen_range(2..=4),
    }
}

pub fn seq(rng: &mut ChaCha8Rng, vocab: usize, len: usize) -> Vec<u32> {
    (0..len).map(|_| rng.gen_range(5..vocab as u32)).collect()
}

pub struct Case {
    pub model: SummarizerModel,
    pub reviews: Vec<Vec<u32>>,
    pub reference: Vec<u32>,
    pub candidates: Vec<Vec<u32>>,
    pub ranking: Ranking,
}

pub fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = tiny_dims(&mut rng);
    let model = SummarizerModel::init(dims, 0.8, seed);
    let reviews = (0..3).map(|_| {
        let n = rng.gen_range(1..5);
        seq(&mut rng, dims.vocab, n)
    }).collect();
    let n_ref = rng.gen_range(1..5);
    let reference = seq(&mut rng, dims.vocab, n_ref);
    let candidates: Vec<Vec<u32>> = (0..4).map(|_| {
        let n = rng.gen_range(1..6);
        seq(&mut rng, dims.vocab, n)
    }).collect();
    let ranking = Ranking::from_scores((0..4).map(|_| rng.gen_range(0..3) as f64).collect());
    Case {
        model,
        reviews,
        reference,
        candidates,
        ranking,
    }
}

pub fn grad_error(case: &Case, weights: LossWeights) -> f64 {
    let ex = Example {
        reviews: &case.reviews,
        reference: &case.reference,
        candidates: &case.candidates,
        ranking: Some(&case.ranking),
    };
    let (_, grad) = case.model.loss_and_grad(&ex, &weights).unwrap();
    let dims = case.model.dims();
    let f = |p: &[f64]| {
        let m = SummarizerModel::from_params(dims, p.to_vec()).unwrap();
        m.loss(&ex, &weights).unwrap().total
    };
    let coords: Vec<usize> = (0..grad.len()).collect();
    max_grad_error(f, case.model.params(), &grad, &coords)
}

/// Three content tokens (5, 6, 7) with hand-set weights.
pub const OUT_W: [[f64; 2]; 8] = [
    [0.1, 0.2],
    [-0.3, 0.4],
    [0.5, -0.6],
    [0.7, 0.8],
    [-0.9, 0.1],
    [1.5, 0.5],
    [-0.7, 1.2],
    [-0.8, -1.7],
];

pub fn hand_model() -> SummarizerModel {
    let dims = ModelDims {
        vocab: 8,
        embed: 2,
        ctx: 1,
        hidden: 2,
    };
    let mut m = SummarizerModel::zeros(dims);
    let embed = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, -1.0, -1.0];
    m.block_mut("embed").unwrap().copy_from_slice(&embed);
    m.block_mut("hid_tok").unwrap().copy_from_slice(&[0.9, -0.4, 0.3, 0.8]);
    m.block_mut("hid_bias").unwrap().copy_from_slice(&[0.2, -0.1]);
    m.block_mut("out_w").unwrap().copy_from_slice(&OUT_W.concat());
    m.block_mut("out_b").unwrap().copy_from_slice(&[-9.0, -9.0, 0.4, -9.0, -9.0, 0.1, 0.0, 0.3]);
    m
}

/// Softmax of the hand model after `prev`, computed directly.
pub fn hand_dist(prev: u32) -> Vec<f64> {
    let e: [[f64; 2]; 8] = [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]];
    let x = e[prev as usize];
    let h = [
        (0.9 * x[0] - 0.4 * x[1] + 0.2f64).tanh(),
        (0.3 * x[0] + 0.8 * x[1] - 0.1f64).tanh(),
    ];
    let b = [-9.0, -9.0, 0.4, -9.0, -9.0, 0.1, 0.0, 0.3];
    let logits: Vec<f64> = (0..8).map(|v| b[v] + OUT_W[v][0] * h[0] + OUT_W[v][1] * h[1]).collect();
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    logits.iter().map(|l| l.exp() / z).collect()
}

/// Best sequence by `loglik / (len + 1)^lenpen` over all sequences of
/// content tokens with `min..=max` tokens.
pub fn exhaustive_best(m: &SummarizerModel, reviews: &[Vec<u32>], cfg: &DecodeConfig) -> Vec<u32> {
    let ctx = m.encode_input(reviews).unwrap();
    let mut best: Option<(f64, Vec<u32>)> = None;
    let mut frontier = vec![Vec::new()];
    for _ in 0..cfg.max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for t in 5..8u32 {
                let mut s2: Vec<u32> = s.clone();
                s2.push(t);
                next.push(s2);
            }
        }
        for s in &next {
            if s.len() < cfg.min_len {
                continue;
            }
            let score = m.seq_loglik(&ctx, s).unwrap() / ((s.len() + 1) as f64).powf(cfg.lenpen);
            if best.as_ref().map_or(true, |(b, _)| score > *b) {
                best = Some((score, s.clone()));
            }
        }
        frontier = next;
    }
    best.unwrap().1
}

