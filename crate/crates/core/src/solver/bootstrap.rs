use nalgebra::DMatrix;
use rand::Rng;

use crate::equations::EquationSystem;
use crate::error::{Error, Result};
use crate::model::SurveyDataset;
use crate::rng::{map_indexed, substream};

use super::{solve, SolveOptions};

pub const BOOTSTRAP_RESAMPLES: usize = 200;

#[derive(Debug, Clone)]
pub struct BootstrapResult {
    /// Estimates of the resamples that converged.
    pub estimates: Vec<Vec<f64>>,
    pub failed: usize,
    pub covariance: DMatrix<f64>,
}

/// Unit-level nonparametric bootstrap: resample units with replacement
/// (weights carried), rebuild and re-solve from `init`.
pub fn bootstrap_covariance<B>(
    data: &SurveyDataset,
    build: B,
    init: &[f64],
    resamples: usize,
    seed: u64,
    opts: &SolveOptions,
) -> Result<BootstrapResult>
where
    B: Fn(&SurveyDataset) -> Result<EquationSystem> + Sync + Send,
{
    let n = data.len();
    let opts = SolveOptions { covariance: false, ..*opts };
    let runs = map_indexed(resamples, |b| -> Option<Vec<f64>> {
        let mut rng = substream(seed, "bootstrap", b as u64);
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let sample = data.resample(&idx).ok()?;
        let system = build(&sample).ok()?;
        let res = solve(&system, init, &opts).ok()?;
        res.converged.then_some(res.params)
    });
    let failed = runs.iter().filter(|r| r.is_none()).count();
    let estimates: Vec<Vec<f64>> = runs.into_iter().flatten().collect();
    if estimates.len() < 2 {
        return Err(Error::Numeric("fewer than two bootstrap resamples converged".into()));
    }
    let d = init.len();
    let b = estimates.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| estimates.iter().map(|e| e[j]).sum::<f64>() / b).collect();
    let mut cov = DMatrix::zeros(d, d);
    for e in &estimates {
        for r in 0..d {
            for s in 0..d {
                cov[(r, s)] += (e[r] - mean[r]) * (e[s] - mean[s]) / (b - 1.0);
            }
        }
    }
    Ok(BootstrapResult { estimates, failed, covariance: cov })
}
