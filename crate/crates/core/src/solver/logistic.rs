use crate::error::{Error, Result};
use crate::math::{dot, expit};

use super::{solve_fn, SolveOptions};

/// Weighted logistic regression by Newton on the score equations.
pub fn logistic_regression(design: &[Vec<f64>], y: &[f64], weights: Option<&[f64]>) -> Result<Vec<f64>> {
    if design.is_empty() || design.len() != y.len() || weights.is_some_and(|w| w.len() != y.len()) {
        return Err(Error::Config("logistic regression needs matching, non-empty inputs".into()));
    }
    let p = design[0].len();
    let total: f64 = weights.map_or(y.len() as f64, |w| w.iter().sum());
    let g = |b: &[f64]| -> Result<Vec<f64>> {
        let mut out = vec![0.0; p];
        for (i, (d, &yi)) in design.iter().zip(y).enumerate() {
            let w = weights.map_or(1.0, |w| w[i]);
            let r = w * (yi - expit(dot(d, b)));
            for (o, v) in out.iter_mut().zip(d) {
                *o += r * v;
            }
        }
        Ok(out.into_iter().map(|v| v / total).collect())
    };
    let opts = SolveOptions { covariance: false, ..SolveOptions::default() };
    let res = solve_fn(g, &vec![0.0; p], &opts);
    if !res.converged {
        return Err(Error::Numeric("logistic regression did not converge (separation?)".into()));
    }
    Ok(res.params)
}
