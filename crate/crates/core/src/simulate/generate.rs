//! Sampling from the scenario designs.
//!
//! The scenarios fix the law `f_2(y | x)` of `Y` among second-call
//! respondents, not the full-data law. Since
//! `f_2(y | x) ∝ f(y | x)·{1 − π_1(x, y)}·π_2(x, y)`, the full-data law is
//! `f(y | x) ∝ f_2(y | x)·[1 + e^{l_1(y)}]·[1 + e^{−l_2(y)}]` with `l_k` the
//! response log-odds at call `k`. Expanding the product gives four terms of
//! the form `e^{a + c·y} f_2(y | x)`. For a Gaussian `f_2 = N(μ, σ²)` each is a
//! scaled `N(μ + cσ², σ²)` with scale `exp(a + cμ + c²σ²/2)`, so `Y` is drawn
//! from a four-component Gaussian mixture; for a binary `f_2` the two-point
//! sum is exact. Units are then sampled forward through the calls.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::math::{dot, expit, legendre_rule};
use crate::model::{CovariateDistribution, Family, SurveyDataset, SurveyUnit};

use super::scenario::ScenarioSpec;

/// Gauss–Legendre nodes per axis of the population covariate law.
pub const POPULATION_NODES: usize = 20;

pub fn covariate_names() -> Vec<String> {
    vec!["xa".into(), "xb".into()]
}

/// `X_a, X_b ~ Unif(−1, 1)` on a product Gauss–Legendre grid.
pub fn population(nodes: usize) -> Result<CovariateDistribution> {
    CovariateDistribution::uniform_box(covariate_names(), &[(-1.0, 1.0), (-1.0, 1.0)], nodes)
}

/// Full-data conditional law of `Y`.
#[derive(Debug, Clone, PartialEq)]
pub enum FullLaw {
    Binary { p: f64 },
    /// `(probability, mean)` components sharing the variance `var`.
    Mixture { components: Vec<(f64, f64)>, var: f64 },
}

impl FullLaw {
    pub fn mean(&self) -> f64 {
        match self {
            FullLaw::Binary { p } => *p,
            FullLaw::Mixture { components, .. } => components.iter().map(|(w, m)| w * m).sum(),
        }
    }
}

struct Predictors {
    a1: f64,
    a2: f64,
    eta: f64,
}

fn predictors(spec: &ScenarioSpec, xa: f64, xb: f64) -> Predictors {
    let x = [1.0, xa, xb];
    Predictors {
        a1: dot(&spec.alpha1, &x),
        a2: dot(&spec.alpha2, &spec.w1.eval(xa, xb)),
        eta: dot(&spec.beta, &spec.w2.eval(xa, xb)),
    }
}

/// `f(y | x)` obtained by undoing the second-call tilt.
pub fn full_law(spec: &ScenarioSpec, xa: f64, xb: f64) -> FullLaw {
    let Predictors { a1, a2, eta } = predictors(spec, xa, xb);
    let (g1, g2) = (spec.gamma, spec.gamma + spec.delta);
    // (log scale, y-slope) of the four terms of [1 + e^{l_1}][1 + e^{−l_2}]
    let terms = [(0.0, 0.0), (a1, g1), (-a2, -g2), (a1 - a2, g1 - g2)];
    match spec.family {
        Family::Binary => {
            let inflate = |y: f64| terms.iter().map(|(a, c)| (a + c * y).exp()).sum::<f64>();
            let p2 = expit(eta);
            let (w0, w1) = ((1.0 - p2) * inflate(0.0), p2 * inflate(1.0));
            FullLaw::Binary { p: w1 / (w0 + w1) }
        }
        Family::Gaussian => {
            let s2 = spec.sigma2;
            let logs: Vec<f64> = terms.iter().map(|(a, c)| a + c * eta + 0.5 * c * c * s2).collect();
            let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let ws: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = ws.iter().sum();
            let components = terms
                .iter()
                .zip(&ws)
                .map(|((_, c), w)| (w / total, eta + c * s2))
                .collect();
            FullLaw::Mixture { components, var: s2 }
        }
    }
}

/// `E(Y) = E_X{E(Y | X)}` by a 64×64 Gauss–Legendre rule over the square.
pub fn true_mean(spec: &ScenarioSpec) -> f64 {
    let rule = legendre_rule(64, -1.0, 1.0);
    let mut total = 0.0;
    for &(xa, wa) in &rule {
        for &(xb, wb) in &rule {
            total += 0.25 * wa * wb * full_law(spec, xa, xb).mean();
        }
    }
    total
}

fn draw_outcome<R: Rng + ?Sized>(law: &FullLaw, rng: &mut R) -> f64 {
    match law {
        FullLaw::Binary { p } => (rng.random::<f64>() < *p) as u8 as f64,
        FullLaw::Mixture { components, var } => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut mean = components.last().map_or(0.0, |c| c.1);
            for (w, m) in components {
                acc += w;
                if u < acc {
                    mean = *m;
                    break;
                }
            }
            Normal::new(mean, var.sqrt()).expect("positive variance").sample(rng)
        }
    }
}

/// One unit: `(x_a, x_b, y, first responding call)`.
pub fn draw_unit<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> (f64, f64, f64, Option<usize>) {
    let xa = rng.random_range(-1.0..1.0);
    let xb = rng.random_range(-1.0..1.0);
    let y = draw_outcome(&full_law(spec, xa, xb), rng);
    let p = predictors(spec, xa, xb);
    let first = if rng.random::<f64>() < expit(p.a1 + spec.gamma * y) {
        Some(1)
    } else if rng.random::<f64>() < expit(p.a2 + (spec.gamma + spec.delta) * y) {
        Some(2)
    } else if let Some(last) = &spec.last {
        (rng.random::<f64>() < expit(dot(&last.alpha, &[1.0, xa, xb]) + last.gamma * y)).then_some(3)
    } else {
        None
    };
    (xa, xb, y, first)
}

/// A sample of size `spec.n` with `(X, Y)` masked for nonrespondents.
pub fn generate<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<SurveyDataset> {
    spec.validate()?;
    let calls = spec.calls();
    let units = (0..spec.n)
        .map(|_| {
            let (xa, xb, y, first) = draw_unit(spec, rng);
            let responded = first.is_some();
            SurveyUnit {
                weight: 1.0,
                responses: (1..=calls).map(|k| first.is_some_and(|f| f <= k)).collect(),
                outcome: responded.then_some(y),
                missing_covariates: responded.then(|| vec![xa, xb]),
                observed_covariates: vec![],
            }
        })
        .collect();
    SurveyDataset::new(covariate_names(), vec![], calls, units)
}

pub fn generate_binary<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<SurveyDataset> {
    if spec.family != Family::Binary {
        return Err(crate::Error::Config("scenario does not have a binary outcome".into()));
    }
    generate(spec, rng)
}

pub fn generate_continuous<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<SurveyDataset> {
    if spec.family != Family::Gaussian {
        return Err(crate::Error::Config("scenario does not have a continuous outcome".into()));
    }
    generate(spec, rng)
}
