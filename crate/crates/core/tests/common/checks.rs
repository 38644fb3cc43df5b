//! Property checks shared by the module tests and the acceptance target.
//! Each returns a short summary on success and the first violation on
//! failure.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use subsumm::config::RunConfig;
use subsumm::corpus::{Perspective, EOS};
use subsumm::features::{FeatureVec, FEATURE_DIM};
use subsumm::ranking::Ranking;
use subsumm::rouge::{lcs_len, rouge_l, rouge_n};
use subsumm::sampling::{compute_quota, requested_quota};
use subsumm::sentiment::SentimentModel;
use subsumm::summodel::{beam_search, beam_search_all, greedy_decode, DecodeConfig, LossWeights, ModelError};
use subsumm::valuation::{corr_scores, ValuationScorer};

use super::oracles::{corr_brute, lcs_exhaustive, ngram_matches, prf};
use super::summ::{exhaustive_best, grad_error, hand_model, random_case};
use super::max_grad_error;

pub type Check = Result<String, String>;

fn fail<T>(msg: String) -> Result<T, String> {
    Err(msg)
}

fn random_tokens(rng: &mut ChaCha8Rng, max_len: usize, alphabet: u8) -> Vec<u8> {
    let n = rng.gen_range(0..=max_len);
    (0..n).map(|_| rng.gen_range(0..alphabet)).collect()
}

pub fn rouge_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..1000 {
        let a = random_tokens(&mut rng, 10, 4);
        let b = random_tokens(&mut rng, 10, 4);
        let lcs = lcs_exhaustive(&a, &b);
        if lcs_len(&a, &b) != lcs {
            return fail(format!("trial {trial}: lcs {a:?} {b:?}"));
        }
        let l = rouge_l(&a, &b);
        if (l.precision, l.recall, l.f1) != prf(lcs, a.len(), b.len()) {
            return fail(format!("trial {trial}: rouge_l {a:?} {b:?}"));
        }
        for n in 1..=3 {
            let got = rouge_n(&a, &b, n);
            let (m, c, r) = ngram_matches(&a, &b, n);
            if (got.precision, got.recall, got.f1) != prf(m, c, r) {
                return fail(format!("trial {trial}: rouge_{n} {a:?} {b:?}"));
            }
        }
    }
    let c: Vec<&str> = "the cat sat".split(' ').collect();
    let r: Vec<&str> = "the cat ate".split(' ').collect();
    let (r1, r2, rl) = (rouge_n(&c, &r, 1).f1, rouge_n(&c, &r, 2).f1, rouge_l(&c, &r).f1);
    let want = prf(2, 3, 3).2;
    if r1 != want || r2 != 0.5 || rl != want || (want - 2.0 / 3.0).abs() > 1e-15 {
        return fail(format!("cat example gave {r1} {r2} {rl}"));
    }
    Ok(format!("1000 pairs agree; cat example r1={r1:.4} r2={r2} rl={rl:.4}"))
}

fn sparse_features(rng: &mut ChaCha8Rng, nnz: usize) -> FeatureVec {
    FeatureVec::from_pairs((0..nnz).map(|_| (rng.gen_range(0..FEATURE_DIM as u32), rng.gen_range(0.2..1.5))))
}

pub fn sentiment_gradient(instances: u64) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let classes = rng.gen_range(2..=5);
        let examples: Vec<(FeatureVec, usize)> = (0..rng.gen_range(1..=6))
            .map(|_| (sparse_features(&mut rng, 4), rng.gen_range(0..classes)))
            .collect();
        let mut model = SentimentModel::zeros(classes);
        for (x, _) in &examples {
            for (i, _) in x.iter() {
                for c in 0..classes {
                    model.weights_mut()[c * FEATURE_DIM + i] = rng.gen_range(-1.0..1.0);
                }
            }
        }
        for b in model.bias_mut() {
            *b = rng.gen_range(-1.0..1.0);
        }
        let l2 = 0.1;
        let grad = model.objective_grad(&examples, l2);
        let flat: Vec<f64> = grad.weights.iter().chain(&grad.bias).copied().collect();
        let nw = classes * FEATURE_DIM;
        let mut coords = Vec::new();
        for (x, _) in &examples {
            for (i, _) in x.iter() {
                coords.extend((0..classes).map(|c| c * FEATURE_DIM + i));
            }
        }
        coords.extend(nw..nw + classes);
        coords.push(17);
        coords.sort_unstable();
        coords.dedup();
        let f = |p: &[f64]| SentimentModel::from_params(classes, p).unwrap().objective(&examples, l2);
        worst = worst.max(max_grad_error(f, &model.params(), &flat, &coords));
    }
    Ok(worst)
}

pub fn valuation_gradient(instances: u64) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let dim = rng.gen_range(2..=4);
        let n = rng.gen_range(3..=6);
        let features: Vec<FeatureVec> = (0..n).map(|_| sparse_features(&mut rng, 3)).collect();
        let ranking = Ranking::from_scores((0..n).map(|_| rng.gen_range(0..4) as f64).collect());
        let mut scorer = ValuationScorer::zeros(dim);
        for x in &features {
            for (i, _) in x.iter() {
                for w in scorer.column_mut(i) {
                    *w = rng.gen_range(-1.0..1.0);
                }
            }
        }
        let margin = 1e-2;
        let (_, sparse) = scorer.loss_and_grad(&features, &ranking, margin).map_err(|e| e.to_string())?;
        let mut flat = vec![0.0; dim * FEATURE_DIM];
        for (i, g) in &sparse {
            flat[*i as usize * dim..(*i as usize + 1) * dim].copy_from_slice(g);
        }
        let mut coords: Vec<usize> = features
            .iter()
            .flat_map(|x| x.iter().flat_map(move |(i, _)| (0..dim).map(move |r| i * dim + r)))
            .collect();
        coords.sort_unstable();
        coords.dedup();
        let f = |p: &[f64]| {
            ValuationScorer::from_params(dim, p.to_vec())
                .unwrap()
                .loss_and_grad(&features, &ranking, margin)
                .unwrap()
                .0
        };
        worst = worst.max(max_grad_error(f, scorer.params(), &flat, &coords));
    }
    Ok(worst)
}

pub fn summarizer_gradient(weights: LossWeights, seed0: u64, instances: u64) -> f64 {
    (0..instances)
        .map(|s| grad_error(&random_case(seed0 + s), weights))
        .fold(0.0, f64::max)
}

pub fn gradient_suite() -> Check {
    let tol = 1e-4;
    let results = [
        ("sentiment", sentiment_gradient(20)?),
        ("valuation", valuation_gradient(20)?),
        ("xent", summarizer_gradient(LossWeights::xent_only(), 0, 20)),
        ("ctr", summarizer_gradient(LossWeights::ctr_only(1e-3, 2.0), 100, 20)),
        ("multitask", summarizer_gradient(LossWeights::multitask(0.7, 1e-3, 2.0), 200, 20)),
    ];
    let summary = results
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    if results.iter().any(|(_, e)| !(*e <= tol)) {
        return fail(format!("max relative error above {tol}: {summary}"));
    }
    Ok(format!("max relative error {summary}"))
}

fn random_embeddings(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

fn time_it<T>(reps: usize, mut f: impl FnMut() -> T) -> Duration {
    let start = Instant::now();
    for _ in 0..reps {
        std::hint::black_box(f());
    }
    start.elapsed() / reps as u32
}

pub fn corr_fast_path() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..100 {
        let n = rng.gen_range(2..=200);
        let d = rng.gen_range(1..=16);
        let h = random_embeddings(&mut rng, n, d);
        let fast = corr_scores(&h).map_err(|e| e.to_string())?;
        let slow = corr_brute(&h);
        if let Some(i) = (0..n).find(|&i| (fast[i] - slow[i]).abs() > 1e-9) {
            return fail(format!("trial {trial}: N={n} review {i}: {} vs {}", fast[i], slow[i]));
        }
    }
    let h = random_embeddings(&mut rng, 2000, 64);
    let fast = time_it(20, || corr_scores(&h).unwrap());
    let slow = time_it(2, || corr_brute(&h));
    let speedup = slow.as_secs_f64() / fast.as_secs_f64();
    if speedup < 10.0 {
        return fail(format!("speedup {speedup:.1}x at N=2000, d=64"));
    }
    Ok(format!("100 trials within 1e-9; {speedup:.0}x faster at N=2000, d=64"))
}

pub fn quota_law() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..10_000 {
        let p = Perspective::ALL[rng.gen_range(0..3)];
        let k = rng.gen_range(1..=20);
        let n_pos = rng.gen_range(0..=30);
        let n_neg = rng.gen_range(0..=30);
        if n_pos + n_neg == 0 {
            continue;
        }
        let n = n_pos + n_neg;
        let q = compute_quota(p, k, n_pos, n_neg).map_err(|e| e.to_string())?;
        let ctx = format!("trial {trial}: {p} K={k} N+={n_pos} N-={n_neg} -> {q:?}");
        if q.total() != k.min(n) || q.k_pos > n_pos || q.k_neg > n_neg {
            return fail(ctx);
        }
        let (req_pos, req_neg) = requested_quota(p, k, n_pos, n_neg).map_err(|e| e.to_string())?;
        match p {
            Perspective::Pros if (req_pos, req_neg) != (k, 0) => return fail(ctx),
            Perspective::Cons if (req_pos, req_neg) != (0, k) => return fail(ctx),
            Perspective::Verdict => {
                let exact = k as f64 * n_pos as f64 / n as f64;
                if req_pos + req_neg != k || (req_pos as f64 - exact).abs() >= 1.0 {
                    return fail(ctx);
                }
            }
            _ => {}
        }
        // unclamped requests are honored as is
        if req_pos <= n_pos && req_neg <= n_neg && (q.k_pos, q.k_neg) != (req_pos, req_neg) {
            return fail(ctx);
        }
    }
    Ok("10000 tuples satisfy the quota law".into())
}

pub fn decode_contracts() -> Check {
    let mut checked = 0;
    for seed in 0..60u64 {
        let case = random_case(600 + seed);
        let cfg = DecodeConfig {
            beam: 1 + (seed as usize % 5),
            min_len: 2 + (seed as usize % 4),
            max_len: 9,
            lenpen: [0.0, 0.5, 1.0][seed as usize % 3],
            trigram_blocking: true,
        };
        let Ok(all) = beam_search_all(&case.model, &case.reviews, &cfg) else {
            continue;
        };
        checked += 1;
        for h in &all {
            if h.tokens.len() < cfg.min_len || h.tokens.contains(&EOS) {
                return fail(format!("seed {seed}: EOS before min length in {:?}", h.tokens));
            }
            let mut seen = HashSet::new();
            if !h.tokens.windows(3).all(|w| seen.insert(w.to_vec())) {
                return fail(format!("seed {seed}: repeated trigram in {:?}", h.tokens));
            }
        }
        let greedy_cfg = DecodeConfig { beam: 1, ..cfg.clone() };
        match (
            beam_search(&case.model, &case.reviews, &greedy_cfg),
            greedy_decode(&case.model, &case.reviews, &greedy_cfg),
        ) {
            (Ok(b), Ok(g)) if b.tokens == g.tokens => {}
            (Err(ModelError::DecodeFailure), Err(ModelError::DecodeFailure)) => {}
            other => return fail(format!("seed {seed}: beam=1 differs from greedy: {other:?}")),
        }
    }
    let m = hand_model();
    let reviews = vec![vec![5, 6, 7]];
    for lenpen in [0.0, 0.5, 1.0, 2.0] {
        for min_len in 1..=3 {
            let cfg = DecodeConfig {
                beam: 64,
                min_len,
                max_len: 3,
                lenpen,
                trigram_blocking: false,
            };
            let got = beam_search(&m, &reviews, &cfg).map_err(|e| e.to_string())?;
            let want = exhaustive_best(&m, &reviews, &cfg);
            if got.tokens != want {
                return fail(format!("lenpen {lenpen} min {min_len}: beam {:?}, exhaustive {want:?}", got.tokens));
            }
        }
    }
    Ok(format!("{checked} random models, 12 exhaustive hand-model cases"))
}

/// Every leaf of `golden` must equal the same path in `actual`.
fn leaves_match(golden: &Value, actual: &Value, path: &str) -> Result<usize, String> {
    match golden {
        Value::Object(map) => map.iter().try_fold(0, |n, (k, g)| {
            let a = actual.get(k).ok_or_else(|| format!("{path}.{k} missing"))?;
            Ok(n + leaves_match(g, a, &format!("{path}.{k}"))?)
        }),
        g if g.as_f64().is_some() && actual.as_f64() == g.as_f64() => Ok(1),
        g if g == actual => Ok(1),
        g => Err(format!("{path}: expected {g}, found {actual}")),
    }
}

pub fn default_constants() -> Check {
    let golden: Value = serde_json::from_str(include_str!("../fixtures/default_config.json")).unwrap();
    let actual: Value = serde_json::from_str(&RunConfig::default().to_json()).map_err(|e| e.to_string())?;
    let n = leaves_match(&golden, &actual, "config")?;
    let back = RunConfig::from_json(&RunConfig::default().to_json()).map_err(|e| e.to_string())?;
    if back != RunConfig::default() {
        return fail("default config does not round trip".into());
    }
    Ok(format!("{n} constants match the golden fixture"))
}
