//! Conditional expectations under the second-call outcome law `f_2(y | x)`
//! and under its exponential tilt toward nonrespondents,
//! `f(y | x, R_2 = 0) ∝ exp{−Γ(x, y)} f_2(y | x)`.
//!
//! Binary laws are handled by exact two-point sums. Gaussian laws with a tilt
//! linear in `y` stay Gaussian with the mean shifted by `−cσ²`; other tilts and
//! non-affine integrands use a 40-node Gauss–Hermite rule (approximate).

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::math::{dot, expit, normal_rule};
use crate::model::{EstimandSpec, OutcomeFeatures, OutcomeLaw, OutcomeModel};

/// Gauss–Hermite nodes used for every Gaussian quadrature fallback.
pub const HERMITE_NODES: usize = 40;

fn hermite() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| normal_rule(HERMITE_NODES))
}

/// The log odds-ratio term `Γ(x, y) = γᵀu(x, y) + Δ·y`.
#[derive(Debug, Clone)]
pub struct LogOddsRatio {
    pub features: OutcomeFeatures,
    pub gamma: Vec<f64>,
    /// Extra slope on `y`; zero except in sensitivity analyses.
    pub offset: f64,
}

impl LogOddsRatio {
    pub fn new(features: OutcomeFeatures, gamma: Vec<f64>) -> Result<Self> {
        if features.dim() != gamma.len() {
            return Err(Error::Config(format!(
                "odds-ratio design has {} features but {} coefficients",
                features.dim(),
                gamma.len()
            )));
        }
        Ok(Self { features, gamma, offset: 0.0 })
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn eval(&self, x: &[f64], y: f64) -> f64 {
        dot(&self.features.eval(x, y), &self.gamma) + self.offset * y
    }

    /// Slope `c(x)` when `Γ(x, y) = c(x)·y`.
    pub fn slope(&self, x: &[f64]) -> Option<f64> {
        self.features
            .is_linear_in_outcome()
            .then(|| self.eval(x, 1.0))
    }
}

/// How `Γ(x, ·)` depends on `y` at a fixed `x`.
pub(crate) enum Tilt<'a> {
    /// `Γ = c·y`.
    Linear(f64),
    General(&'a dyn Fn(f64) -> f64),
}

/// Nodes of a law, quadrature for Gaussian ones.
fn nodes_of(law: &OutcomeLaw) -> Vec<(f64, f64)> {
    match law {
        OutcomeLaw::Binary { p } => vec![(0.0, 1.0 - p), (1.0, *p)],
        OutcomeLaw::Gaussian { mean, var } => {
            let sd = var.sqrt();
            hermite().iter().map(|(z, w)| (mean + sd * z, *w)).collect()
        }
        OutcomeLaw::Nodes(n) => n.clone(),
    }
}

/// Reweights nodes by `exp{−Γ(y)}` and renormalises.
fn reweight(nodes: Vec<(f64, f64)>, gamma: impl Fn(f64) -> f64) -> Result<OutcomeLaw> {
    let logs: Vec<f64> = nodes
        .iter()
        .map(|(y, w)| if *w > 0.0 { w.ln() - gamma(*y) } else { f64::NEG_INFINITY })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::Numeric("tilted law has no finite mass".into()));
    }
    let ws: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = ws.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Numeric("tilt normaliser diverged".into()));
    }
    Ok(OutcomeLaw::Nodes(
        nodes.iter().zip(ws).map(|((y, _), w)| (*y, w / total)).collect(),
    ))
}

pub(crate) fn tilt_law(law: &OutcomeLaw, tilt: Tilt<'_>) -> Result<OutcomeLaw> {
    match (law, tilt) {
        (OutcomeLaw::Binary { p }, Tilt::Linear(c)) => Ok(OutcomeLaw::Binary { p: tilt_binary(*p, c) }),
        (OutcomeLaw::Binary { p }, Tilt::General(g)) => {
            Ok(OutcomeLaw::Binary { p: tilt_binary(*p, g(1.0) - g(0.0)) })
        }
        (OutcomeLaw::Gaussian { mean, var }, Tilt::Linear(c)) => Ok(OutcomeLaw::Gaussian {
            mean: mean - c * var,
            var: *var,
        }),
        (law, Tilt::Linear(c)) => reweight(nodes_of(law), |y| c * y),
        (law, Tilt::General(g)) => reweight(nodes_of(law), g),
    }
}

/// `P(Y = 1)` after tilting a Bernoulli(`p`) law by `exp(−c·y)`.
#[inline]
pub fn tilt_binary(p: f64, c: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return p;
    }
    expit(p.ln() - (-p).ln_1p() - c)
}

/// `E{U(x, Y)}` under `law`.
pub(crate) fn expect(law: &OutcomeLaw, u: &OutcomeFeatures, x: &[f64]) -> Vec<f64> {
    let dim = u.dim();
    let (mut a, mut b) = (vec![0.0; dim], vec![0.0; dim]);
    if u.affine_parts(x, &mut a, &mut b) && !matches!(law, OutcomeLaw::Nodes(_)) {
        let m = law.mean();
        return a.iter().zip(&b).map(|(a, b)| a + m * b).collect();
    }
    let mut out = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    for (y, w) in nodes_of(law) {
        u.eval_into(x, y, &mut buf);
        for (o, v) in out.iter_mut().zip(&buf) {
            *o += w * v;
        }
    }
    out
}

fn tilted_law(outcome: &OutcomeModel, orm: &LogOddsRatio, x: &[f64]) -> Result<OutcomeLaw> {
    let law = outcome.law(x);
    match orm.slope(x) {
        Some(c) => tilt_law(&law, Tilt::Linear(c)),
        None => {
            let g = |y: f64| orm.eval(x, y);
            tilt_law(&law, Tilt::General(&g))
        }
    }
}

/// `g_U(x; β) = E{U(X, Y) | X = x, R_2 = 1, R_1 = 0}`.
pub fn conditional_expectation_g(outcome: &OutcomeModel, u: &OutcomeFeatures, x: &[f64]) -> Result<Vec<f64>> {
    outcome.design().check_width(x.len())?;
    u.check_width(x.len())?;
    Ok(expect(&outcome.law(x), u, x))
}

/// `h_U(x; β, γ) = E{U(X, Y) | X = x, R_2 = 0}` via exponential tilting.
pub fn tilted_expectation_h(
    outcome: &OutcomeModel,
    orm: &LogOddsRatio,
    u: &OutcomeFeatures,
    x: &[f64],
) -> Result<Vec<f64>> {
    outcome.design().check_width(x.len())?;
    u.check_width(x.len())?;
    orm.features.check_width(x.len())?;
    let law = tilted_law(outcome, orm, x)?;
    let out = expect(&law, u, x);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite tilted expectation".into()));
    }
    Ok(out)
}

/// `h_m(x; θ, β, γ)`: the tilted expectation of the estimating function.
pub fn impute_estimand_h_m(
    outcome: &OutcomeModel,
    orm: &LogOddsRatio,
    spec: &EstimandSpec,
    theta: &[f64],
    x: &[f64],
) -> Result<Vec<f64>> {
    if theta.len() != spec.dim() {
        return Err(Error::Config("θ dimension does not match the estimand".into()));
    }
    let hy = tilted_law(outcome, orm, x)?.mean();
    let d = spec.dim();
    let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
    spec.affine_parts(x, theta, &mut a, &mut b);
    Ok(a.iter().zip(&b).map(|(a, b)| a + hy * b).collect())
}
