use crate::error::{config, Result};
use crate::math::{dot, expit};
use crate::model::{FeatureMap, OutcomeFeatures};

/// `π_k(x, y) = expit{A_k(x; α_k) + Γ(x, y; γ)}` with a linear baseline
/// `A_k = α_kᵀ v(x)` and odds-ratio term `Γ = γᵀ u(x, y)`, `u(x, 0) = 0`.
#[derive(Debug, Clone)]
pub struct PropensityModel {
    baseline: Vec<FeatureMap>,
    alpha: Vec<Vec<f64>>,
    odds: OutcomeFeatures,
    gamma: Vec<f64>,
}

impl PropensityModel {
    /// One baseline design and coefficient vector per call, a shared odds term.
    pub fn new(
        baseline: Vec<FeatureMap>,
        alpha: Vec<Vec<f64>>,
        odds: OutcomeFeatures,
        gamma: Vec<f64>,
    ) -> Result<Self> {
        if baseline.len() != alpha.len() || baseline.is_empty() {
            return config("need one baseline design per call coefficient vector");
        }
        for (k, (b, a)) in baseline.iter().zip(&alpha).enumerate() {
            if b.dim() != a.len() {
                return config(format!(
                    "call {}: baseline design has {} features but {} coefficients",
                    k + 1,
                    b.dim(),
                    a.len()
                ));
            }
        }
        if odds.dim() != gamma.len() {
            return config(format!(
                "odds-ratio design has {} features but {} coefficients",
                odds.dim(),
                gamma.len()
            ));
        }
        if let OutcomeFeatures::Affine { .. } = odds {
            if !odds.is_linear_in_outcome() {
                return config("odds-ratio features must vanish at y = 0");
            }
        }
        Ok(Self { baseline, alpha, odds, gamma })
    }

    pub fn calls(&self) -> usize {
        self.alpha.len()
    }

    /// `A_k(x)`, `k` 1-based.
    pub fn baseline(&self, k: usize, x: &[f64]) -> f64 {
        dot(&self.baseline[k - 1].eval(x), &self.alpha[k - 1])
    }

    /// `Γ(x, y)`.
    pub fn log_odds_ratio(&self, x: &[f64], y: f64) -> f64 {
        dot(&self.odds.eval(x, y), &self.gamma)
    }

    pub fn propensity(&self, k: usize, x: &[f64], y: f64) -> Result<f64> {
        if k == 0 || k > self.calls() {
            return config(format!("call index {k} out of range"));
        }
        self.baseline[k - 1].check_width(x.len())?;
        self.odds.check_width(x.len())?;
        Ok(expit(self.baseline(k, x) + self.log_odds_ratio(x, y)))
    }
}

/// Free-function form of [`PropensityModel::propensity`].
pub fn propensity(model: &PropensityModel, k: usize, x: &[f64], y: f64) -> Result<f64> {
    model.propensity(k, x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Term;

    fn linear3() -> FeatureMap {
        FeatureMap::new(vec![Term::Column(0), Term::Column(1), Term::Column(2)], &[])
    }

    #[test]
    fn zero_coefficients_give_half() {
        let m = PropensityModel::new(vec![linear3()], vec![vec![0.0; 3]], OutcomeFeatures::outcome(), vec![0.0])
            .unwrap();
        assert_eq!(m.propensity(1, &[0.3, -2.0, 5.0], 1.0).unwrap(), 0.5);
    }

    #[test]
    fn baseline_cancels_odds() {
        let m = PropensityModel::new(
            vec![FeatureMap::intercept_only()],
            vec![vec![-1.0]],
            OutcomeFeatures::outcome(),
            vec![1.0],
        )
        .unwrap();
        assert_eq!(m.propensity(1, &[], 1.0).unwrap(), 0.5);
    }

    #[test]
    fn worked_example() {
        let m = PropensityModel::new(vec![linear3()], vec![vec![-1.0, 0.5, 0.2]], OutcomeFeatures::outcome(), vec![1.0])
            .unwrap();
        let p = m.propensity(1, &[1.0, 1.0, 1.0], 1.0).unwrap();
        // expit(0.7) evaluated independently
        let oracle = 1.0 / (1.0 + (-0.7f64).exp());
        assert!((p - oracle).abs() < 1e-15);
        assert!((p - 0.66819).abs() < 1e-5);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        assert!(PropensityModel::new(vec![linear3()], vec![vec![0.0; 2]], OutcomeFeatures::outcome(), vec![0.0]).is_err());
        assert!(PropensityModel::new(vec![linear3()], vec![vec![0.0; 3]], OutcomeFeatures::outcome(), vec![]).is_err());
        let m = PropensityModel::new(vec![linear3()], vec![vec![0.0; 3]], OutcomeFeatures::outcome(), vec![0.0]).unwrap();
        assert!(m.propensity(1, &[1.0], 0.0).is_err());
        assert!(m.propensity(2, &[1.0, 1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn odds_features_must_vanish_at_reference() {
        let u = OutcomeFeatures::covariates_then_outcome(&FeatureMap::intercept_only());
        assert!(PropensityModel::new(vec![linear3()], vec![vec![0.0; 3]], u, vec![0.0, 0.0]).is_err());
    }
}
