use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::math::{dot, expit};
use crate::model::FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// `P(Y = 1 | x) = expit(βᵀd(x))`.
    Binary,
    /// `Y | x ~ N(βᵀd(x), σ²)`.
    Gaussian,
}

impl std::str::FromStr for Family {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binary" | "logistic" | "binary-logistic" => Ok(Family::Binary),
            "gaussian" | "continuous" | "normal" | "gaussian-linear" => Ok(Family::Gaussian),
            other => config(format!("unknown outcome family `{other}`")),
        }
    }
}

/// A conditional law of the outcome at a fixed covariate value.
#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeLaw {
    Binary { p: f64 },
    Gaussian { mean: f64, var: f64 },
    /// Discrete approximation: `(y_k, w_k)` with `Σ w_k = 1`.
    Nodes(Vec<(f64, f64)>),
}

impl OutcomeLaw {
    pub fn mean(&self) -> f64 {
        match self {
            OutcomeLaw::Binary { p } => *p,
            OutcomeLaw::Gaussian { mean, .. } => *mean,
            OutcomeLaw::Nodes(nodes) => nodes.iter().map(|(y, w)| y * w).sum(),
        }
    }
}

/// Conditional outcome model among call-k respondents.
#[derive(Debug, Clone)]
pub struct OutcomeModel {
    family: Family,
    design: FeatureMap,
    beta: Vec<f64>,
    sigma2: f64,
}

impl OutcomeModel {
    pub fn binary(design: FeatureMap, beta: Vec<f64>) -> Result<Self> {
        Self::new(Family::Binary, design, beta, 1.0)
    }

    pub fn gaussian(design: FeatureMap, beta: Vec<f64>, sigma2: f64) -> Result<Self> {
        Self::new(Family::Gaussian, design, beta, sigma2)
    }

    pub fn new(family: Family, design: FeatureMap, beta: Vec<f64>, sigma2: f64) -> Result<Self> {
        if design.dim() != beta.len() {
            return config(format!(
                "outcome design has {} features but {} coefficients",
                design.dim(),
                beta.len()
            ));
        }
        if family == Family::Gaussian && !(sigma2 > 0.0 && sigma2.is_finite()) {
            return config("Gaussian outcome model needs a positive finite variance");
        }
        Ok(Self { family, design, beta, sigma2 })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn design(&self) -> &FeatureMap {
        &self.design
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        dot(&self.design.eval(x), &self.beta)
    }

    pub fn law(&self, x: &[f64]) -> OutcomeLaw {
        law_from_predictor(self.family, self.linear_predictor(x), self.sigma2)
    }

    /// Number of free parameters in the score: `β` plus `log σ²` for Gaussian.
    pub fn score_dim(&self) -> usize {
        score_dim(self.family, self.design.dim())
    }

    /// Score of `log f(y | x)` with respect to `(β, log σ²)`.
    pub fn score(&self, x: &[f64], y: f64) -> Vec<f64> {
        let d = self.design.eval(x);
        let mut out = vec![0.0; self.score_dim()];
        score_into(self.family, &d, dot(&d, &self.beta), self.sigma2, y, &mut out);
        out
    }
}

pub(crate) fn score_dim(family: Family, design_dim: usize) -> usize {
    match family {
        Family::Binary => design_dim,
        Family::Gaussian => design_dim + 1,
    }
}

#[inline]
pub(crate) fn law_from_predictor(family: Family, eta: f64, sigma2: f64) -> OutcomeLaw {
    match family {
        Family::Binary => OutcomeLaw::Binary { p: expit(eta) },
        Family::Gaussian => OutcomeLaw::Gaussian { mean: eta, var: sigma2 },
    }
}

#[inline]
pub(crate) fn score_into(family: Family, d: &[f64], eta: f64, sigma2: f64, y: f64, out: &mut [f64]) {
    match family {
        Family::Binary => {
            let r = y - expit(eta);
            for (o, v) in out.iter_mut().zip(d) {
                *o = v * r;
            }
        }
        Family::Gaussian => {
            let r = y - eta;
            for (o, v) in out.iter_mut().zip(d) {
                *o = v * r / sigma2;
            }
            out[d.len()] = 0.5 * (r * r / sigma2 - 1.0);
        }
    }
}
