use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::math::legendre_rule;

/// Population law of the covariates as a finite weighted support.
///
/// Continuous covariates enter through a discretisation (for instance a
/// Gauss–Legendre product grid), which keeps `E_f{V(X)}` an exact finite sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateDistribution {
    names: Vec<String>,
    support: Vec<Vec<f64>>,
    mass: Vec<f64>,
}

impl CovariateDistribution {
    pub fn new(names: Vec<String>, support: Vec<Vec<f64>>, mass: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return config("covariate distribution has empty support");
        }
        if support.len() != mass.len() {
            return config("support and mass lengths differ");
        }
        let dim = support[0].len();
        if support.iter().any(|s| s.len() != dim) {
            return config("support vectors have differing dimensions");
        }
        if !names.is_empty() && names.len() != dim {
            return config("covariate names do not match support dimension");
        }
        if support.iter().flatten().any(|v| !v.is_finite()) {
            return config("non-finite support value");
        }
        if mass.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return config("masses must be finite and nonnegative");
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return config(format!("masses sum to {total}, expected 1"));
        }
        Ok(Self { names, support, mass })
    }

    /// Normalises nonnegative counts into masses.
    pub fn from_counts(names: Vec<String>, support: Vec<Vec<f64>>, counts: Vec<f64>) -> Result<Self> {
        let total: f64 = counts.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return config("counts must have a positive finite total");
        }
        if counts.iter().any(|&c| c < 0.0) {
            return config("negative count");
        }
        let mut mass: Vec<f64> = counts.iter().map(|c| c / total).collect();
        renormalize(&mut mass);
        Self::new(names, support, mass)
    }

    pub fn point_mass(names: Vec<String>, x: Vec<f64>) -> Result<Self> {
        Self::new(names, vec![x], vec![1.0])
    }

    /// Independent uniform coordinates on the box `∏ [lo_j, hi_j]`, discretised
    /// by a tensor Gauss–Legendre grid with `nodes` points per axis.
    pub fn uniform_box(names: Vec<String>, bounds: &[(f64, f64)], nodes: usize) -> Result<Self> {
        let mut acc = Self::new(vec![], vec![vec![]], vec![1.0])?;
        for &(lo, hi) in bounds {
            if !(hi > lo) {
                return config("uniform box bounds must satisfy lo < hi");
            }
            let rule = legendre_rule(nodes, lo, hi);
            let mut mass: Vec<f64> = rule.iter().map(|(_, w)| w / (hi - lo)).collect();
            renormalize(&mut mass);
            let axis = Self::new(vec![], rule.iter().map(|(x, _)| vec![*x]).collect(), mass)?;
            acc = product_distribution(&acc, &axis)?;
        }
        acc.names = names;
        if !acc.names.is_empty() && acc.names.len() != bounds.len() {
            return config("covariate names do not match box dimension");
        }
        Ok(acc)
    }

    pub fn dim(&self) -> usize {
        self.support[0].len()
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.support.iter().map(Vec::as_slice).zip(self.mass.iter().copied())
    }

    /// `E_f{V(X)} = Σ_j mass_j · V(x_j)`.
    pub fn expectation<F>(&self, dim: usize, mut v: F) -> Vec<f64>
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let mut out = vec![0.0; dim];
        let mut buf = vec![0.0; dim];
        for (x, m) in self.iter() {
            v(x, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += m * b;
            }
        }
        out
    }

    /// Marginal law of the listed coordinates (equal support points merged).
    pub fn marginal(&self, cols: &[usize]) -> Result<Self> {
        let mut support: Vec<Vec<f64>> = Vec::new();
        let mut mass: Vec<f64> = Vec::new();
        for (x, m) in self.iter() {
            let key: Vec<f64> = cols.iter().map(|&j| x[j]).collect();
            match support.iter().position(|s| *s == key) {
                Some(i) => mass[i] += m,
                None => {
                    support.push(key);
                    mass.push(m);
                }
            }
        }
        renormalize(&mut mass);
        let names = if self.names.is_empty() {
            vec![]
        } else {
            cols.iter().map(|&j| self.names[j].clone()).collect()
        };
        Self::new(names, support, mass)
    }
}

/// Fixes rounding so masses sum to one within the validation tolerance.
fn renormalize(mass: &mut [f64]) {
    let total: f64 = mass.iter().sum();
    if total > 0.0 {
        for m in mass.iter_mut() {
            *m /= total;
        }
    }
}

/// Population expectation of a vector function under `dist`.
pub fn population_expectation<F>(dist: &CovariateDistribution, dim: usize, v: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if dist.is_empty() {
        return config("empty support");
    }
    Ok(dist.expectation(dim, v))
}

/// Independent product `f(X) = f(X_1) f(X_2)`; support vectors are `(x1, x2)`.
pub fn product_distribution(
    d1: &CovariateDistribution,
    d2: &CovariateDistribution,
) -> Result<CovariateDistribution> {
    let mut support = Vec::with_capacity(d1.len() * d2.len());
    let mut mass = Vec::with_capacity(d1.len() * d2.len());
    for (x1, m1) in d1.iter() {
        for (x2, m2) in d2.iter() {
            let mut x = x1.to_vec();
            x.extend_from_slice(x2);
            support.push(x);
            mass.push(m1 * m2);
        }
    }
    renormalize(&mut mass);
    let names = if d1.names.is_empty() && d2.names.is_empty() {
        vec![]
    } else {
        d1.names.iter().chain(&d2.names).cloned().collect()
    };
    CovariateDistribution::new(names, support, mass)
}
