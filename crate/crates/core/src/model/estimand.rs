use crate::error::{config, Result};
use crate::math::{dot, expit};
use crate::model::FeatureMap;

/// Full-data estimating function `m(x, y; θ)` defining the target `θ`.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimandSpec {
    /// `m = y − θ`.
    Mean,
    /// `m = d(x){y − expit(d(x)ᵀθ)}` for a regressor design `d`.
    Logistic(FeatureMap),
}

impl EstimandSpec {
    pub fn dim(&self) -> usize {
        match self {
            EstimandSpec::Mean => 1,
            EstimandSpec::Logistic(d) => d.dim(),
        }
    }

    pub fn labels(&self) -> Vec<String> {
        match self {
            EstimandSpec::Mean => vec!["mean".to_string()],
            EstimandSpec::Logistic(d) => d.labels().to_vec(),
        }
    }

    /// Writes `a` and `b` with `m(x, y; θ) = a + y·b`.
    #[inline]
    pub(crate) fn affine_parts(&self, x: &[f64], theta: &[f64], a: &mut [f64], b: &mut [f64]) {
        match self {
            EstimandSpec::Mean => {
                a[0] = -theta[0];
                b[0] = 1.0;
            }
            EstimandSpec::Logistic(d) => {
                d.eval_into(x, b);
                let p = expit(dot(b, theta));
                for (ai, bi) in a.iter_mut().zip(b.iter()) {
                    *ai = -bi * p;
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64], y: f64, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.dim() {
            return config(format!("θ has {} entries, estimand needs {}", theta.len(), self.dim()));
        }
        if let EstimandSpec::Logistic(d) = self {
            d.check_width(x.len())?;
        }
        let (mut a, mut b) = (vec![0.0; self.dim()], vec![0.0; self.dim()]);
        self.affine_parts(x, theta, &mut a, &mut b);
        Ok(a.iter().zip(&b).map(|(a, b)| a + y * b).collect())
    }
}

/// Free-function form of [`EstimandSpec::eval`].
pub fn estimand_fn(spec: &EstimandSpec, x: &[f64], y: f64, theta: &[f64]) -> Result<Vec<f64>> {
    spec.eval(x, y, theta)
}
