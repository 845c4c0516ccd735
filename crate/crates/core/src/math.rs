//! Scalar helpers shared across the crate.

use std::num::NonZeroUsize;

use gauss_quad::{GaussHermite, GaussLegendre};
use statrs::distribution::{ContinuousCDF, Normal};

#[inline]
pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

pub fn normal_cdf(z: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").cdf(z)
}

/// Nodes and weights of an n-point Gauss–Legendre rule on `[a, b]`.
pub fn legendre_rule(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(n).expect("positive node count"));
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.nodes()
        .zip(rule.weights())
        .map(|(x, w)| (mid + half * x, half * w))
        .collect()
}

/// Probabilists' Gauss–Hermite rule: nodes `z_k` and weights `w_k` with
/// `sum_k w_k f(z_k) ≈ E f(Z)` for `Z ~ N(0, 1)`.
pub fn normal_rule(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussHermite::new(NonZeroUsize::new(n).expect("positive node count"));
    let norm = std::f64::consts::PI.sqrt();
    rule.nodes()
        .zip(rule.weights())
        .map(|(x, w)| (x * std::f64::consts::SQRT_2, w / norm))
        .collect()
}
