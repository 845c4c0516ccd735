//! Building, initialising and solving a system in one call.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::equations::{
    build_dr, build_ipw, build_multicall_dr, build_multicall_ipw, build_multicall_reg, build_reg, cc_estimator,
    cor_estimator, corx_estimator, mar_estimator, pc_estimator, EquationSystem, ModelSpec, SorKind,
};
use crate::error::{Error, Result};
use crate::model::{CovariateDistribution, SurveyDataset};
use crate::solver::{bootstrap_covariance, confidence_interval, solve, standard_errors, SolveOptions};

/// Estimation methods available from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ipw,
    Reg,
    Dr,
    Cc,
    /// The SOR system of the given kind with `γ = 0`.
    Mar(SorKind),
    Cor,
    Corx,
    Pc,
}

impl Method {
    pub fn name(self) -> String {
        match self {
            Method::Ipw => "ipw".into(),
            Method::Reg => "reg".into(),
            Method::Dr => "dr".into(),
            Method::Cc => "cc".into(),
            Method::Mar(SorKind::Ipw) => "mar".into(),
            Method::Mar(k) => format!("mar-{}", k.name()),
            Method::Cor => "cor".into(),
            Method::Corx => "corx".into(),
            Method::Pc => "pc".into(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "ipw" => Method::Ipw,
            "reg" => Method::Reg,
            "dr" => Method::Dr,
            "cc" => Method::Cc,
            "mar" | "mar-ipw" => Method::Mar(SorKind::Ipw),
            "mar-reg" => Method::Mar(SorKind::Reg),
            "mar-dr" => Method::Mar(SorKind::Dr),
            "cor" => Method::Cor,
            "corx" => Method::Corx,
            "pc" => Method::Pc,
            other => return Err(Error::Config(format!("unknown method `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    pub solve: SolveOptions,
    pub level: f64,
    /// Number of calls analysed; 2 uses the two-call systems, more uses the
    /// multi-call systems on data collapsed to that many calls.
    pub calls: usize,
    /// Bootstrap resamples computed alongside the sandwich, if any.
    pub bootstrap: Option<usize>,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { solve: SolveOptions::default(), level: 0.95, calls: 2, bootstrap: None, seed: 20240607 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub block: String,
    pub label: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub bootstrap_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityRange {
    pub call: usize,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub method: String,
    pub parameters: Vec<ParamEstimate>,
    pub converged: bool,
    pub residual_norm: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub covariance_error: Option<String>,
    pub propensity: Vec<PropensityRange>,
    pub notes: Vec<String>,
}

impl Estimate {
    pub fn params(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.estimate).collect()
    }

    pub fn block(&self, name: &str) -> Vec<&ParamEstimate> {
        self.parameters.iter().filter(|p| p.block == name).collect()
    }

    /// First coordinate of a block.
    pub fn first(&self, name: &str) -> Option<&ParamEstimate> {
        self.parameters.iter().find(|p| p.block == name)
    }

    pub fn theta(&self) -> Option<&ParamEstimate> {
        self.first("theta")
    }
}

/// Start value built block by block with the other blocks held fixed.
pub fn initial_values(system: &EquationSystem, opts: &SolveOptions) -> Vec<f64> {
    let mut x = vec![0.0; system.dim()];
    let sub_opts = SolveOptions { covariance: false, ..*opts };
    for name in system.init_order() {
        let Some(range) = system.layout().range(name) else { continue };
        let free: Vec<usize> = range.clone().collect();
        let Ok(sub) = system.restrict(free, x.clone()) else { continue };
        if let Ok(res) = solve(&sub, &x[range.clone()], &sub_opts) {
            if res.residual_norm.is_finite() {
                x[range].copy_from_slice(&res.params);
            }
        }
    }
    x
}

/// Initialises, solves and summarises.
pub fn fit(system: &EquationSystem, opts: &FitOptions) -> Result<Estimate> {
    let init = initial_values(system, &opts.solve);
    fit_from(system, &init, opts)
}

pub fn fit_from(system: &EquationSystem, init: &[f64], opts: &FitOptions) -> Result<Estimate> {
    let res = solve(system, init, &opts.solve)?;
    let se = res.covariance.as_ref().map(standard_errors);
    let coords = system.layout().coordinates();
    let parameters = coords
        .into_iter()
        .enumerate()
        .map(|(j, (block, label))| {
            let s = se.as_ref().map(|s| s[j]);
            ParamEstimate {
                block,
                label,
                estimate: res.params[j],
                se: s,
                ci: s.map(|s| confidence_interval(res.params[j], s, opts.level)),
                bootstrap_se: None,
            }
        })
        .collect();
    let propensity = if res.converged {
        system
            .propensity_ranges(&res.params)
            .into_iter()
            .map(|(call, min, max)| PropensityRange { call, min, max })
            .collect()
    } else {
        Vec::new()
    };
    let covariance = res
        .covariance
        .as_ref()
        .map(|c| (0..c.nrows()).map(|r| c.row(r).iter().copied().collect()).collect());
    Ok(Estimate {
        method: system.name().to_string(),
        parameters,
        converged: res.converged,
        residual_norm: res.residual_norm,
        iterations: res.iterations,
        restarts: res.restarts,
        covariance,
        covariance_error: res.covariance_error,
        propensity,
        notes: Vec::new(),
    })
}

/// Builds the system for an SOR method at the requested number of calls.
pub fn build(
    kind: SorKind,
    data: &SurveyDataset,
    spec: &ModelSpec,
    dist: &CovariateDistribution,
    calls: usize,
) -> Result<EquationSystem> {
    let data = data.collapse_calls(calls)?;
    match (kind, calls) {
        (SorKind::Ipw, 2) => build_ipw(&data, spec, dist),
        (SorKind::Reg, 2) => build_reg(&data, spec, dist),
        (SorKind::Dr, 2) => build_dr(&data, spec, dist),
        (SorKind::Ipw, _) => build_multicall_ipw(&data, spec, dist),
        (SorKind::Reg, _) => build_multicall_reg(&data, spec, dist),
        (SorKind::Dr, _) => build_multicall_dr(&data, spec, dist),
    }
}

/// Runs one method end to end.
pub fn estimate(
    method: Method,
    data: &SurveyDataset,
    dist: &CovariateDistribution,
    spec: &ModelSpec,
    opts: &FitOptions,
) -> Result<Estimate> {
    let calls = opts.calls;
    let sor = |kind: SorKind| -> Result<Estimate> {
        let system = build(kind, data, spec, dist, calls)?;
        let mut est = fit(&system, opts)?;
        if let Some(b) = opts.bootstrap {
            if est.converged {
                attach_bootstrap(&mut est, data, b, opts, |d| build(kind, d, spec, dist, calls))?;
            }
        }
        Ok(est)
    };
    let mut est = match method {
        Method::Ipw => sor(SorKind::Ipw)?,
        Method::Reg => sor(SorKind::Reg)?,
        Method::Dr => sor(SorKind::Dr)?,
        Method::Mar(kind) => mar_estimator(kind, &data.collapse_calls(2)?, spec, dist, opts)?,
        Method::Cc => cc_estimator(&data.collapse_calls(calls)?, &spec.estimand, opts)?,
        Method::Cor => cor_estimator(&data.collapse_calls(calls)?, &spec.estimand, opts)?,
        Method::Corx => corx_estimator(&data.collapse_calls(calls)?, spec, dist, opts)?,
        Method::Pc => pc_estimator(data, opts)?.1,
    };
    est.method = method.name();
    Ok(est)
}

fn attach_bootstrap<B>(est: &mut Estimate, data: &SurveyDataset, resamples: usize, opts: &FitOptions, build: B) -> Result<()>
where
    B: Fn(&SurveyDataset) -> Result<EquationSystem> + Sync + Send,
{
    let boot = bootstrap_covariance(data, build, &est.params(), resamples, opts.seed, &opts.solve)?;
    for (j, p) in est.parameters.iter_mut().enumerate() {
        p.bootstrap_se = Some(boot.covariance[(j, j)].max(0.0).sqrt());
    }
    est.notes.push(format!("bootstrap: {} of {resamples} resamples converged", boot.estimates.len()));
    Ok(())
}
