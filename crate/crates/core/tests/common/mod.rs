#![allow(dead_code)]

pub mod checks;
pub mod cli;
pub mod oracles;
pub mod summ;
pub mod tiny;

/// Central finite difference of `f` along coordinate `i` of `x`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[i] += h;
    minus[i] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest relative error between `grad` and central differences of `f`
/// over the given coordinates.
pub fn max_grad_error(f: impl Fn(&[f64]) -> f64, x: &[f64], grad: &[f64], coords: &[usize]) -> f64 {
    coords
        .iter()
        .map(|&i| rel_err(grad[i], central_diff(&f, x, i, 1e-5), 1e-6))
        .fold(0.0, f64::max)
}
