//! Latent-utility model of voting and responding with an unmeasured factor `C`.
//!
//! `U_0 = β_0 + β_1 X + β_2 C + ε_0`, `Y = 1{U_0 > 0}`;
//! `U_k = α_k0 + α_k1 X + γ_k C + ε_k`, `R_1 = 1{U_1 > 0}`,
//! `R_2 = R_1 + (1 − R_1)1{U_2 > 0}`; `X, C ~ N(0, 1)` and the `ε` are
//! independent standard logistic.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{SurveyDataset, SurveyUnit};
use crate::solver::logistic_regression;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChoiceParams {
    pub beta: [f64; 3],
    pub alpha1: [f64; 2],
    pub alpha2: [f64; 2],
    pub gamma1: f64,
    pub gamma2: f64,
}

impl Default for ChoiceParams {
    fn default() -> Self {
        Self { beta: [0.2, 0.35, 0.3], alpha1: [-0.6, 0.4], alpha2: [0.35, -0.3], gamma1: 0.3, gamma2: 0.3 }
    }
}

/// Sample with the latent factor and the full outcome retained.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceSample {
    pub x: Vec<f64>,
    pub c: Vec<f64>,
    pub y: Vec<f64>,
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
}

fn logistic<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    (u / (1.0 - u)).ln()
}

pub fn generate_choice_model<R: Rng + ?Sized>(params: &ChoiceParams, n: usize, rng: &mut R) -> ChoiceSample {
    let mut s = ChoiceSample { x: vec![], c: vec![], y: vec![], r1: vec![], r2: vec![] };
    for _ in 0..n {
        let x: f64 = StandardNormal.sample(rng);
        let c: f64 = StandardNormal.sample(rng);
        let [b0, b1, b2] = params.beta;
        let y = (b0 + b1 * x + b2 * c + logistic(rng) > 0.0) as u8 as f64;
        let r1 = (params.alpha1[0] + params.alpha1[1] * x + params.gamma1 * c + logistic(rng) > 0.0) as u8 as f64;
        let u2 = params.alpha2[0] + params.alpha2[1] * x + params.gamma2 * c + logistic(rng);
        let r2 = if r1 == 1.0 { 1.0 } else { (u2 > 0.0) as u8 as f64 };
        s.x.push(x);
        s.c.push(c);
        s.y.push(y);
        s.r1.push(r1);
        s.r2.push(r2);
    }
    s
}

impl ChoiceSample {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// The observed survey: `(X, Y)` masked when `R_2 = 0`.
    pub fn dataset(&self) -> Result<SurveyDataset> {
        let units = (0..self.len())
            .map(|i| {
                let resp = self.r2[i] == 1.0;
                SurveyUnit {
                    weight: 1.0,
                    responses: vec![self.r1[i] == 1.0, resp],
                    outcome: resp.then_some(self.y[i]),
                    missing_covariates: resp.then(|| vec![self.x[i]]),
                    observed_covariates: vec![],
                }
            })
            .collect();
        SurveyDataset::new(vec!["x".into()], vec![], 2, units)
    }

    /// Outcome coefficients `(γ̃_1, γ̃_2)` of the logistic fits of `R_1` on
    /// `(1, X, Y)` and of `R_2` on `(1, X, Y)` among `R_1 = 0`.
    pub fn odds_ratios(&self) -> Result<(f64, f64)> {
        let d: Vec<Vec<f64>> = (0..self.len()).map(|i| vec![1.0, self.x[i], self.y[i]]).collect();
        let g1 = logistic_regression(&d, &self.r1, None)?[2];
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.r1[i] == 0.0).collect();
        let d2: Vec<Vec<f64>> = idx.iter().map(|&i| d[i].clone()).collect();
        let r2: Vec<f64> = idx.iter().map(|&i| self.r2[i]).collect();
        let g2 = logistic_regression(&d2, &r2, None)?[2];
        Ok((g1, g2))
    }
}
