use nalgebra::DMatrix;

use crate::equations::EquationSystem;
use crate::error::{Error, Result};
use crate::math::normal_quantile;

use super::numeric_jacobian;

/// Condition numbers above this are treated as singular.
const MAX_CONDITION: f64 = 1e14;

/// `A⁻¹ B A⁻ᵀ` with `A = ∂g/∂θ` and `B = Σ ŵ_i² ψ_i ψ_iᵀ`.
pub fn sandwich_covariance(system: &EquationSystem, solution: &[f64]) -> Result<DMatrix<f64>> {
    let a = numeric_jacobian(|p| system.residual(p), solution)?;
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::Singular { condition });
    }
    let a_inv = a.try_inverse().ok_or(Error::Singular { condition })?;
    let b = system.meat(solution)?;
    let cov = &a_inv * b * a_inv.transpose();
    Ok((&cov + cov.transpose()) * 0.5)
}

pub fn standard_errors(cov: &DMatrix<f64>) -> Vec<f64> {
    (0..cov.nrows()).map(|i| cov[(i, i)].max(0.0).sqrt()).collect()
}

/// `est ± z_{(1+level)/2}·se`.
pub fn confidence_interval(est: f64, se: f64, level: f64) -> (f64, f64) {
    let z = normal_quantile(0.5 * (1.0 + level));
    (est - z * se, est + z * se)
}

pub fn confidence_intervals(params: &[f64], cov: &DMatrix<f64>, level: f64) -> Vec<(f64, f64)> {
    params
        .iter()
        .zip(standard_errors(cov))
        .map(|(&p, se)| confidence_interval(p, se, level))
        .collect()
}
