use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CovariateDistribution;

/// One sampled unit as supplied by a caller or a file reader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyUnit {
    pub weight: f64,
    /// Cumulative response indicators `r_1..r_K`.
    pub responses: Vec<bool>,
    pub outcome: Option<f64>,
    /// Covariates that go missing together with the outcome.
    pub missing_covariates: Option<Vec<f64>>,
    /// Always observed (design) covariates.
    pub observed_covariates: Vec<f64>,
}

/// A survey with callback records.
///
/// Response indicators are stored as the first call at which the unit
/// responded, which makes monotonicity of `r_k` structural. Weights are
/// normalised to mean one on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyDataset {
    calls: usize,
    weights: Vec<f64>,
    first_response: Vec<Option<usize>>,
    outcome: Vec<Option<f64>>,
    missing_covariates: Vec<Option<Vec<f64>>>,
    observed_covariates: Vec<Vec<f64>>,
    missing_names: Vec<String>,
    observed_names: Vec<String>,
}

/// How the law of the always-observed covariates is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignWeighting {
    /// Weighted empirical frequencies over all sampled units.
    #[default]
    Empirical,
    /// Equal mass on every distinct observed design cell.
    Balanced,
}

impl SurveyDataset {
    pub fn new(
        missing_names: Vec<String>,
        observed_names: Vec<String>,
        calls: usize,
        units: Vec<SurveyUnit>,
    ) -> Result<Self> {
        if calls < 2 {
            return Err(Error::Invalid(format!("need at least two calls, got {calls}")));
        }
        if units.is_empty() {
            return Err(Error::Invalid("dataset has no units".into()));
        }
        let n = units.len();
        let mut weights = Vec::with_capacity(n);
        let mut first_response = Vec::with_capacity(n);
        let mut outcome = Vec::with_capacity(n);
        let mut missing = Vec::with_capacity(n);
        let mut observed = Vec::with_capacity(n);
        for (i, u) in units.into_iter().enumerate() {
            let bad = |m: String| Error::Invalid(format!("unit {i}: {m}"));
            if !(u.weight > 0.0) || !u.weight.is_finite() {
                return Err(bad(format!("weight {} must be positive and finite", u.weight)));
            }
            if u.responses.len() != calls {
                return Err(bad(format!("expected {calls} response indicators")));
            }
            if u.responses.windows(2).any(|w| w[0] && !w[1]) {
                return Err(bad("response indicators must be nondecreasing across calls".into()));
            }
            let first = u.responses.iter().position(|&r| r).map(|k| k + 1);
            let responded = first.is_some();
            if responded != u.outcome.is_some() {
                return Err(bad("outcome must be present exactly when the unit responded".into()));
            }
            if responded != u.missing_covariates.is_some() {
                return Err(bad("co-missing covariates must be present exactly when the unit responded".into()));
            }
            if let Some(y) = u.outcome {
                if !y.is_finite() {
                    return Err(bad("non-finite outcome".into()));
                }
            }
            if let Some(x) = &u.missing_covariates {
                if x.len() != missing_names.len() || x.iter().any(|v| !v.is_finite()) {
                    return Err(bad("co-missing covariates have wrong length or non-finite values".into()));
                }
            }
            if u.observed_covariates.len() != observed_names.len()
                || u.observed_covariates.iter().any(|v| !v.is_finite())
            {
                return Err(bad("observed covariates have wrong length or non-finite values".into()));
            }
            weights.push(u.weight);
            first_response.push(first);
            outcome.push(u.outcome);
            missing.push(u.missing_covariates);
            observed.push(u.observed_covariates);
        }
        let mean = weights.iter().sum::<f64>() / n as f64;
        for w in &mut weights {
            *w /= mean;
        }
        Ok(Self {
            calls,
            weights,
            first_response,
            outcome,
            missing_covariates: missing,
            observed_covariates: observed,
            missing_names,
            observed_names,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    /// Normalised (mean one) sampling weight.
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `r_k` for unit `i`, `k` 1-based.
    pub fn responded_by(&self, i: usize, k: usize) -> bool {
        matches!(self.first_response[i], Some(c) if c <= k)
    }

    pub fn first_response(&self, i: usize) -> Option<usize> {
        self.first_response[i]
    }

    pub fn outcome(&self, i: usize) -> Option<f64> {
        self.outcome[i]
    }

    pub fn missing_names(&self) -> &[String] {
        &self.missing_names
    }

    pub fn observed_names(&self) -> &[String] {
        &self.observed_names
    }

    /// Names of the full covariate vector `X = (X_1, X_2)`.
    pub fn covariate_names(&self) -> Vec<String> {
        self.missing_names.iter().chain(&self.observed_names).cloned().collect()
    }

    pub fn observed_covariates(&self, i: usize) -> &[f64] {
        &self.observed_covariates[i]
    }

    /// Full covariate vector, available for respondents only.
    pub fn covariates(&self, i: usize) -> Option<Vec<f64>> {
        self.missing_covariates[i].as_ref().map(|x1| {
            let mut x = x1.clone();
            x.extend_from_slice(&self.observed_covariates[i]);
            x
        })
    }

    pub fn unit(&self, i: usize) -> SurveyUnit {
        SurveyUnit {
            weight: self.weights[i],
            responses: (1..=self.calls).map(|k| self.responded_by(i, k)).collect(),
            outcome: self.outcome[i],
            missing_covariates: self.missing_covariates[i].clone(),
            observed_covariates: self.observed_covariates[i].clone(),
        }
    }

    /// Treats responses after call `calls` as nonresponse.
    pub fn collapse_calls(&self, calls: usize) -> Result<Self> {
        if calls < 2 || calls > self.calls {
            return Err(Error::Config(format!(
                "cannot collapse {} calls to {calls}",
                self.calls
            )));
        }
        let units = (0..self.len())
            .map(|i| {
                let mut u = self.unit(i);
                u.responses.truncate(calls);
                if !u.responses[calls - 1] {
                    u.outcome = None;
                    u.missing_covariates = None;
                }
                u
            })
            .collect();
        Self::new(self.missing_names.clone(), self.observed_names.clone(), calls, units)
    }

    /// A dataset made of the listed units (with repetition), weights carried.
    pub fn resample(&self, indices: &[usize]) -> Result<Self> {
        let units = indices.iter().map(|&i| self.unit(i)).collect();
        Self::new(self.missing_names.clone(), self.observed_names.clone(), self.calls, units)
    }

    /// Replaces the outcome of unit `i` (respondents only).
    pub fn set_outcome(&mut self, i: usize, y: f64) -> Result<()> {
        if self.outcome[i].is_none() {
            return Err(Error::Invalid(format!("unit {i} is a nonrespondent")));
        }
        if !y.is_finite() {
            return Err(Error::Invalid(format!("unit {i}: non-finite outcome")));
        }
        self.outcome[i] = Some(y);
        Ok(())
    }

    pub fn is_binary(&self) -> bool {
        self.outcome.iter().flatten().all(|&y| y == 0.0 || y == 1.0)
    }

    /// Law of the always-observed covariates estimated from all sampled units.
    pub fn design_distribution(&self, weighting: DesignWeighting) -> Result<CovariateDistribution> {
        let mut cells: Vec<Vec<f64>> = Vec::new();
        let mut mass: Vec<f64> = Vec::new();
        for i in 0..self.len() {
            let x2 = &self.observed_covariates[i];
            let w = match weighting {
                DesignWeighting::Empirical => self.weights[i],
                DesignWeighting::Balanced => 0.0,
            };
            match cells.iter().position(|c| c == x2) {
                Some(j) => mass[j] += w,
                None => {
                    cells.push(x2.clone());
                    mass.push(w);
                }
            }
        }
        if weighting == DesignWeighting::Balanced {
            mass.iter_mut().for_each(|m| *m = 1.0);
        }
        CovariateDistribution::from_counts(self.observed_names.clone(), cells, mass)
    }
}
