//! Imputation of outcomes reported with low confidence.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{dot, expit};
use crate::model::{FeatureMap, SurveyDataset};
use crate::solver::logistic_regression;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImputeMode {
    /// `y = 1` when the fitted probability is at least one half.
    #[default]
    Threshold,
    /// `y ~ Bernoulli(p̂)` drawn from a stream seeded by `seed`.
    Stochastic { seed: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImputeReport {
    pub coefficients: Vec<f64>,
    /// `(unit, fitted probability, imputed outcome)`.
    pub imputed: Vec<(usize, f64, f64)>,
}

/// Fits a weighted logistic regression of `y` on `design` among the sure
/// respondents and replaces the outcomes of the units flagged `unsure`.
pub fn impute_unsure(
    data: &SurveyDataset,
    unsure: &[bool],
    design: &FeatureMap,
    mode: ImputeMode,
) -> Result<(SurveyDataset, ImputeReport)> {
    if unsure.len() != data.len() {
        return Err(Error::Config("unsure flags must cover every unit".into()));
    }
    let mut rows = Vec::new();
    for i in 0..data.len() {
        if let (Some(x), Some(y), false) = (data.covariates(i), data.outcome(i), unsure[i]) {
            if y != 0.0 && y != 1.0 {
                return Err(Error::Invalid(format!("unit {i}: imputation needs a binary outcome")));
            }
            design.check_width(x.len())?;
            rows.push((data.weight(i), design.eval(&x), y));
        }
    }
    if rows.is_empty() {
        return Err(Error::Identification("no sure respondents to fit the imputation model".into()));
    }
    let (d, rest): (Vec<Vec<f64>>, Vec<(f64, f64)>) = rows.into_iter().map(|(w, d, y)| (d, (w, y))).unzip();
    let (w, y): (Vec<f64>, Vec<f64>) = rest.into_iter().unzip();
    let coefficients = logistic_regression(&d, &y, Some(&w))?;
    let mut rng = match mode {
        ImputeMode::Stochastic { seed } => Some(crate::rng::substream(seed, "impute", 0)),
        ImputeMode::Threshold => None,
    };
    let mut out = data.clone();
    let mut imputed = Vec::new();
    for i in 0..data.len() {
        if !unsure[i] {
            continue;
        }
        let Some(x) = data.covariates(i) else { continue };
        let p = expit(dot(&design.eval(&x), &coefficients));
        let y = match rng.as_mut() {
            None => (p >= 0.5) as u8 as f64,
            Some(r) => (r.random::<f64>() < p) as u8 as f64,
        };
        out.set_outcome(i, y)?;
        imputed.push((i, p, y));
    }
    Ok((out, ImputeReport { coefficients, imputed }))
}
