use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::equations::EquationSystem;
use crate::error::{Error, Result};
use crate::math::max_abs;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    pub restarts: usize,
    pub jitter_sd: f64,
    pub ridge: f64,
    /// Seed of the jitter used by restarts.
    pub seed: u64,
    /// Compute the sandwich covariance after convergence.
    pub covariance: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            max_halvings: 30,
            restarts: 5,
            jitter_sd: 0.5,
            ridge: 1e-8,
            seed: 0x5eed,
            covariance: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub params: Vec<f64>,
    /// `‖g‖∞` at `params`.
    pub residual_norm: f64,
    /// Newton iterations over all attempts.
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    pub covariance: Option<DMatrix<f64>>,
    /// Why the covariance is missing, if it is.
    pub covariance_error: Option<String>,
}

/// Central-difference Jacobian with steps `max(1e−6, 1e−6·|x_j|)`.
pub fn numeric_jacobian<F>(g: F, at: &[f64]) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = at.len();
    let mut x = at.to_vec();
    let mut jac: Option<DMatrix<f64>> = None;
    for j in 0..n {
        let h = (1e-6 * at[j].abs()).max(1e-6);
        x[j] = at[j] + h;
        let up = g(&x)?;
        x[j] = at[j] - h;
        let down = g(&x)?;
        x[j] = at[j];
        let m = jac.get_or_insert_with(|| DMatrix::zeros(up.len(), n));
        for (r, (u, d)) in up.iter().zip(&down).enumerate() {
            m[(r, j)] = (u - d) / (2.0 * h);
        }
    }
    let jac = jac.unwrap_or_else(|| DMatrix::zeros(0, 0));
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite Jacobian entry".into()));
    }
    Ok(jac)
}

/// `−J⁻¹g`, with a ridge retry when `J` is singular.
fn newton_step(jac: &DMatrix<f64>, g: &[f64], ridge: f64) -> Option<DVector<f64>> {
    let rhs = -DVector::from_column_slice(g);
    let ok = |v: &DVector<f64>| v.iter().all(|x| x.is_finite());
    if let Some(step) = jac.clone().lu().solve(&rhs).filter(ok) {
        return Some(step);
    }
    let n = jac.nrows();
    let scale = jac.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let reg = jac + DMatrix::identity(n, n) * (ridge * scale);
    reg.lu().solve(&rhs).filter(ok)
}

struct Run {
    x: Vec<f64>,
    norm: f64,
    iterations: usize,
    converged: bool,
}

fn newton<F>(g: &F, init: Vec<f64>, opts: &SolveOptions) -> Run
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut x = init;
    let mut f = match g(&x) {
        Ok(f) if f.iter().all(|v| v.is_finite()) => f,
        _ => return Run { x, norm: f64::INFINITY, iterations: 0, converged: false },
    };
    let mut norm = max_abs(&f);
    let mut it = 0;
    while it < opts.max_iter {
        if norm < opts.tol {
            return Run { x, norm, iterations: it, converged: true };
        }
        it += 1;
        let Ok(jac) = numeric_jacobian(g, &x) else { break };
        let Some(step) = newton_step(&jac, &f, opts.ridge) else { break };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            if let Ok(ft) = g(&trial) {
                let nt = max_abs(&ft);
                if nt.is_finite() && nt < norm {
                    x = trial;
                    f = ft;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let converged = norm < opts.tol;
    Run { x, norm, iterations: it, converged }
}

/// Damped Newton on a plain function, with jittered restarts.
pub fn solve_fn<F>(g: F, init: &[f64], opts: &SolveOptions) -> SolveResult
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut best = newton(&g, init.to_vec(), opts);
    let mut iterations = best.iterations;
    let mut restarts = 0;
    if !best.converged && opts.restarts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let normal = Normal::new(0.0, opts.jitter_sd.max(0.0)).expect("valid jitter sd");
        while restarts < opts.restarts && !best.converged {
            restarts += 1;
            let start: Vec<f64> = init.iter().map(|v| v + normal.sample(&mut rng)).collect();
            let run = newton(&g, start, opts);
            iterations += run.iterations;
            if run.converged || run.norm < best.norm {
                best = run;
            }
        }
    }
    SolveResult {
        params: best.x,
        residual_norm: best.norm,
        iterations,
        restarts,
        converged: best.converged,
        covariance: None,
        covariance_error: None,
    }
}

/// Solves `g(θ) = 0` for a built system and, when converged and requested,
/// attaches the sandwich covariance.
pub fn solve(system: &EquationSystem, init: &[f64], opts: &SolveOptions) -> Result<SolveResult> {
    if init.len() != system.dim() {
        return Err(Error::Config(format!(
            "initial value has {} entries, system `{}` has {} parameters",
            init.len(),
            system.name(),
            system.dim()
        )));
    }
    let mut res = solve_fn(|p| system.residual(p), init, opts);
    if res.converged && opts.covariance {
        match super::sandwich_covariance(system, &res.params) {
            Ok(c) => res.covariance = Some(c),
            Err(e) => res.covariance_error = Some(e.to_string()),
        }
    }
    Ok(res)
}
