//! Baseline estimators: complete cases, missing at random, continuum of
//! resistance (with and without covariates) and parameter counting.

use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::estimate::{fit, Estimate, FitOptions};
use crate::model::{CovariateDistribution, EstimandSpec, Family, FeatureMap, SurveyDataset};

use super::frame::{check_dist, At, EstimandBlock, Frame, OutcomeBlock};
use super::system::{Aggregate, EquationSystem, MomentFunction, ParamLayout};
use super::two_call::{order, SorKind};
use super::{build_dr, build_ipw, build_reg, ModelSpec};

struct Cc {
    frame: Frame,
    m: EstimandBlock,
}

impl MomentFunction for Cc {
    fn dim(&self) -> usize {
        self.m.dim
    }

    fn accumulate(&self, p: &[f64], visit: &mut dyn FnMut(usize, f64, &[f64])) -> Result<Aggregate> {
        let (mut phi, mut sc) = (vec![0.0; p.len()], vec![0.0; p.len()]);
        for (i, row) in self.frame.rows.iter().enumerate() {
            self.m.observed(i, row.y, p, &mut phi, &mut sc);
            visit(row.unit, row.w, &phi);
        }
        Ok(Aggregate { population: vec![0.0; p.len()], silent: vec![0.0; p.len()] })
    }

    fn silent_weights(&self) -> (f64, f64) {
        self.frame.silent
    }
}

/// `Σ w_i r_{K,i} m(x_i, y_i; θ) = 0` over respondents by the last call.
pub fn cc_system(data: &SurveyDataset, estimand: &EstimandSpec) -> Result<EquationSystem> {
    let frame = Frame::new(data, data.calls())?;
    let m = EstimandBlock::new(estimand, &frame, None)?;
    let mut layout = ParamLayout::new();
    layout.push("theta", estimand.labels());
    EquationSystem::new("cc", layout, Arc::new(Cc { frame, m }), order(&["theta"]))
}

pub fn cc_estimator(data: &SurveyDataset, estimand: &EstimandSpec, opts: &FitOptions) -> Result<Estimate> {
    fit(&cc_system(data, estimand)?, opts)
}

/// SOR system of the given kind with `γ` frozen at zero.
pub fn mar_system(
    kind: SorKind,
    data: &SurveyDataset,
    spec: &ModelSpec,
    dist: &CovariateDistribution,
) -> Result<EquationSystem> {
    let full = match kind {
        SorKind::Ipw => build_ipw(data, spec, dist)?,
        SorKind::Reg => build_reg(data, spec, dist)?,
        SorKind::Dr => build_dr(data, spec, dist)?,
    };
    let g = spec.odds.dim();
    full.freeze("gamma", &vec![0.0; g])
}

pub fn mar_estimator(
    kind: SorKind,
    data: &SurveyDataset,
    spec: &ModelSpec,
    dist: &CovariateDistribution,
    opts: &FitOptions,
) -> Result<Estimate> {
    fit(&mar_system(kind, data, spec, dist)?, opts)
}

fn require_mean(estimand: &EstimandSpec, name: &str) -> Result<()> {
    match estimand {
        EstimandSpec::Mean => Ok(()),
        _ => config(format!("{name} is defined for the outcome mean only")),
    }
}

/// Last-call respondents: responded at the horizon but not before.
fn last_call_rows(frame: &Frame) -> Result<usize> {
    let n = frame.rows.iter().filter(|r| r.prev == 0.0).count();
    if n == 0 {
        return Err(Error::Identification("no respondents at the last call".into()));
    }
    Ok(n)
}

struct Cor {
    frame: Frame,
}

impl MomentFunction for Cor {
    fn dim(&self) -> usize {
        2
    }

    fn accumulate(&self, p: &[f64], visit: &mut dyn FnMut(usize, f64, &[f64])) -> Result<Aggregate> {
        let (last, theta) = (p[0], p[1]);
        for row in &self.frame.rows {
            let phi = [(1.0 - row.prev) * (row.y - last), row.y - theta];
            visit(row.unit, row.w, &phi);
        }
        Ok(Aggregate { population: vec![0.0; 2], silent: vec![0.0, last - theta] })
    }

    fn silent_weights(&self) -> (f64, f64) {
        self.frame.silent
    }
}

/// Nonrespondents take the weighted mean of last-call respondents.
/// Parameters `(θ_last, θ)`.
pub fn cor_system(data: &SurveyDataset) -> Result<EquationSystem> {
    let frame = Frame::new(data, data.calls())?;
    last_call_rows(&frame)?;
    let mut layout = ParamLayout::new();
    layout.push("theta_last", vec!["mean".into()]);
    layout.push("theta", vec!["mean".into()]);
    EquationSystem::new("cor", layout, Arc::new(Cor { frame }), order(&["theta_last", "theta"]))
}

pub fn cor_estimator(data: &SurveyDataset, estimand: &EstimandSpec, opts: &FitOptions) -> Result<Estimate> {
    require_mean(estimand, "COR")?;
    fit(&cor_system(data)?, opts)
}

/// Covariate law of the nonrespondents implied by the population law.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NonrespondentLaw {
    pub dist: CovariateDistribution,
    /// Support points whose mass went negative and was set to zero.
    pub clipped: usize,
    /// Respondents whose covariates match no support point.
    pub unmatched: usize,
    /// Weighted share of nonrespondents.
    pub share: f64,
}

/// `q ∝ max(f − p̂_resp, 0)`, with `p̂_resp` the respondents' weighted
/// empirical covariate law (as a share of all units).
pub fn nonrespondent_covariates(data: &SurveyDataset, dist: &CovariateDistribution) -> Result<NonrespondentLaw> {
    let frame = Frame::new(data, data.calls())?;
    check_dist(dist, frame.rows[0].x.len())?;
    let mut mass = dist.mass().to_vec();
    let mut unmatched = 0;
    for row in &frame.rows {
        match dist.support().iter().position(|s| *s == row.x) {
            Some(j) => mass[j] -= row.w,
            None => unmatched += 1,
        }
    }
    let clipped = mass.iter().filter(|m| **m < 0.0).count();
    mass.iter_mut().for_each(|m| *m = m.max(0.0));
    if mass.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Identification("no population mass left for nonrespondents".into()));
    }
    let law = CovariateDistribution::from_counts(dist.names().to_vec(), dist.support().to_vec(), mass)?;
    Ok(NonrespondentLaw { dist: law, clipped, unmatched, share: frame.silent.0 })
}

/// Continuum of resistance with covariates: the nonrespondent mean is the
/// last-call outcome model averaged over the nonrespondent covariate law.
pub struct CorxSystem {
    pub system: EquationSystem,
    pub law: NonrespondentLaw,
}

struct Corx {
    frame: Frame,
    outcome: OutcomeBlock,
    b: Range<usize>,
    th: usize,
    dim: usize,
    /// Nonrespondent covariate law on the support of `outcome.pop`.
    mass: Vec<f64>,
}

impl MomentFunction for Corx {
    fn dim(&self) -> usize {
        self.dim
    }

    fn accumulate(&self, p: &[f64], visit: &mut dyn FnMut(usize, f64, &[f64])) -> Result<Aggregate> {
        let (beta, theta) = (&p[self.b.clone()], p[self.th]);
        let mut phi = vec![0.0; self.dim];
        for (i, row) in self.frame.rows.iter().enumerate() {
            let last = 1.0 - row.prev;
            if last != 0.0 {
                let base = self.outcome.base(At::Row(i), beta);
                self.outcome.score(i, &base, row.y, &mut phi[self.b.clone()]);
            } else {
                phi[self.b.clone()].fill(0.0);
            }
            phi[self.th] = row.y - theta;
            visit(row.unit, row.w, &phi);
        }
        let mut silent = vec![0.0; self.dim];
        let mut g = 0.0;
        for (j, m) in self.mass.iter().enumerate() {
            g += m * self.outcome.base(At::Pop(j), beta).untilted(false).mean;
        }
        silent[self.th] = g - theta;
        Ok(Aggregate { population: vec![0.0; self.dim], silent })
    }

    fn silent_weights(&self) -> (f64, f64) {
        self.frame.silent
    }
}

/// COR_x over `(β_L, θ)`; `β_L` is fitted on last-call respondents and the
/// nonrespondent covariate law is held fixed.
pub fn corx_system(
    data: &SurveyDataset,
    family: Family,
    design: &FeatureMap,
    dist: &CovariateDistribution,
) -> Result<CorxSystem> {
    let law = nonrespondent_covariates(data, dist)?;
    let frame = Frame::new(data, data.calls())?;
    last_call_rows(&frame)?;
    let outcome = OutcomeBlock::new(family, design, &frame, &law.dist)?;
    let mut layout = ParamLayout::new();
    let b = layout.push("beta_last", outcome.labels.clone());
    let th = layout.push("theta", vec!["mean".into()]).start;
    let dim = layout.dim();
    let m = Corx { frame, outcome, b, th, dim, mass: law.dist.mass().to_vec() };
    let system = EquationSystem::new("corx", layout, Arc::new(m), order(&["beta_last", "theta"]))?;
    Ok(CorxSystem { system, law })
}

pub fn corx_estimator(
    data: &SurveyDataset,
    spec: &ModelSpec,
    dist: &CovariateDistribution,
    opts: &FitOptions,
) -> Result<Estimate> {
    require_mean(&spec.estimand, "COR_x")?;
    let CorxSystem { system, law } = corx_system(data, spec.family, &spec.outcome, dist)?;
    let mut est = fit(&system, opts)?;
    est.notes.push(format!(
        "nonrespondent covariate law: {} support points clipped at zero, {} respondents off the support",
        law.clipped, law.unmatched
    ));
    Ok(est)
}

/// Weighted shares of the four observed cells of a binary outcome over two calls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcCells {
    /// `P(Y = 0, R_1 = 0, R_2 = 1)`.
    pub p3: f64,
    /// `P(Y = 1, R_1 = 0, R_2 = 1)`.
    pub p4: f64,
    /// `P(Y = 0, R_1 = 1)`.
    pub p5: f64,
    /// `P(Y = 1, R_1 = 1)`.
    pub p6: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcSolution {
    /// `p_1..p_6`; `p_1`, `p_2` are the nonrespondent cells with `Y = 0, 1`.
    pub p: [f64; 6],
    pub theta: f64,
}

/// Solves `p_6(p_1 + p_3) p_2 p_3 = p_5(p_2 + p_4) p_4 p_1` with
/// `p_1 + p_2 = 1 − (p_3 + p_4 + p_5 + p_6)` by bisection on `p_1`.
pub fn pc_identify(c: PcCells) -> Result<PcSolution> {
    let PcCells { p3, p4, p5, p6 } = c;
    let cells = [p3, p4, p5, p6];
    if cells.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Invalid("cell probabilities must be nonnegative".into()));
    }
    let s = 1.0 - cells.iter().sum::<f64>();
    if s < -1e-12 {
        return Err(Error::Invalid("observed cells sum to more than one".into()));
    }
    let s = s.max(0.0);
    let f = |p1: f64| {
        let p2 = s - p1;
        p6 * (p1 + p3) * p2 * p3 - p5 * (p2 + p4) * p4 * p1
    };
    let (mut lo, mut hi) = (0.0, s);
    let (flo, fhi) = (f(lo), f(hi));
    let p1 = if s == 0.0 {
        0.0
    } else if flo == 0.0 {
        lo
    } else if fhi == 0.0 {
        hi
    } else {
        if flo.signum() == fhi.signum() {
            return Err(Error::Identification(format!(
                "no sign change on [0, {s}] (F(0) = {flo:e}, F({s}) = {fhi:e})"
            )));
        }
        let up = flo < 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if (f(mid) < 0.0) == up {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let p2 = s - p1;
    Ok(PcSolution { p: [p1, p2, p3, p4, p5, p6], theta: p2 + p4 + p6 })
}

fn pc_cell(row_r1: f64, y: f64) -> usize {
    match (row_r1 != 0.0, y != 0.0) {
        (false, false) => 0,
        (false, true) => 1,
        (true, false) => 2,
        (true, true) => 3,
    }
}

struct Pc {
    frame: Frame,
}

impl MomentFunction for Pc {
    fn dim(&self) -> usize {
        5
    }

    fn accumulate(&self, p: &[f64], visit: &mut dyn FnMut(usize, f64, &[f64])) -> Result<Aggregate> {
        let sol = pc_identify(PcCells { p3: p[0], p4: p[1], p5: p[2], p6: p[3] })?;
        let gap = sol.theta - p[4];
        let mut phi = [0.0; 5];
        for row in &self.frame.rows {
            for (k, v) in phi.iter_mut().take(4).enumerate() {
                *v = -p[k];
            }
            phi[pc_cell(row.r1, row.y)] += 1.0;
            phi[4] = gap;
            visit(row.unit, row.w, &phi);
        }
        let silent = vec![-p[0], -p[1], -p[2], -p[3], gap];
        Ok(Aggregate { population: vec![0.0; 5], silent })
    }

    fn silent_weights(&self) -> (f64, f64) {
        self.frame.silent
    }
}

/// M-estimation stack for the cell shares `p_3..p_6` and `θ`; later calls are
/// treated as nonresponse.
pub fn pc_system(data: &SurveyDataset) -> Result<EquationSystem> {
    let frame = Frame::new(data, 2)?;
    if frame.rows.iter().any(|r| r.y != 0.0 && r.y != 1.0) {
        return config("parameter counting needs a binary outcome");
    }
    let mut layout = ParamLayout::new();
    layout.push("cells", vec!["p3".into(), "p4".into(), "p5".into(), "p6".into()]);
    layout.push("theta", vec!["mean".into()]);
    EquationSystem::new("pc", layout, Arc::new(Pc { frame }), vec![])
}

/// Weighted cell frequencies over the first two calls.
pub fn pc_cells(data: &SurveyDataset) -> Result<PcCells> {
    let frame = Frame::new(data, 2)?;
    let mut c = [0.0; 4];
    for row in &frame.rows {
        if row.y != 0.0 && row.y != 1.0 {
            return config("parameter counting needs a binary outcome");
        }
        c[pc_cell(row.r1, row.y)] += row.w;
    }
    Ok(PcCells { p3: c[0], p4: c[1], p5: c[2], p6: c[3] })
}

/// Parameter-counting estimate started at the closed-form solution.
pub fn pc_estimator(data: &SurveyDataset, opts: &FitOptions) -> Result<(PcSolution, Estimate)> {
    let cells = pc_cells(data)?;
    let sol = pc_identify(cells)?;
    let system = pc_system(data)?;
    let init = [cells.p3, cells.p4, cells.p5, cells.p6, sol.theta];
    let est = crate::estimate::fit_from(&system, &init, opts)?;
    Ok((sol, est))
}
