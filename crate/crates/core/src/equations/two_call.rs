//! Two-call SOR systems: inverse probability weighting, regression
//! imputation and the doubly robust combination.

use std::ops::Range;
use std::sync::Arc;

use crate::error::{config, Result};
use crate::math::dot;
use crate::model::{CovariateDistribution, OutcomeFeatures, SurveyDataset};

use super::frame::{
    check_dist, propensity_checked, At, DesignBlock, EstimandBlock, Frame, OddsBlock, OutcomeBlock, Range1,
    UBlock,
};
use super::system::{Aggregate, EquationSystem, MomentFunction, ParamLayout};
use super::ModelSpec;

/// The three SOR estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SorKind {
    Ipw,
    Reg,
    Dr,
}

impl SorKind {
    pub fn name(self) -> &'static str {
        match self {
            SorKind::Ipw => "ipw",
            SorKind::Reg => "reg",
            SorKind::Dr => "dr",
        }
    }
}

/// Blocks common to the two-call systems.
pub(crate) struct Core {
    pub frame: Frame,
    pub dist: CovariateDistribution,
    pub v1: DesignBlock,
    pub v2: DesignBlock,
    pub c1: DesignBlock,
    pub c2: DesignBlock,
    pub odds: OddsBlock,
    pub m: EstimandBlock,
    pub delta: f64,
}

impl Core {
    pub fn new(data: &SurveyDataset, spec: &ModelSpec, dist: &CovariateDistribution, horizon: usize) -> Result<Self> {
        if !spec.delta.is_finite() {
            return config("sensitivity offset must be finite");
        }
        let frame = Frame::new(data, horizon)?;
        check_dist(dist, frame.rows[0].x.len())?;
        let c1 = spec.calibration1.as_ref().unwrap_or(&spec.baseline1);
        let c2 = spec.calibration2.as_ref().unwrap_or(&spec.baseline2);
        let v1 = DesignBlock::new(&spec.baseline1, &frame, dist)?;
        let v2 = DesignBlock::new(&spec.baseline2, &frame, dist)?;
        let c1 = DesignBlock::new(c1, &frame, dist)?;
        let c2 = DesignBlock::new(c2, &frame, dist)?;
        if c1.dim != v1.dim || c2.dim != v2.dim {
            return config("calibration functions must match the baseline dimensions");
        }
        let odds = OddsBlock::new(&spec.odds, &frame, dist)?;
        let m = EstimandBlock::new(&spec.estimand, &frame, Some(dist))?;
        Ok(Self { frame, dist: dist.clone(), v1, v2, c1, c2, odds, m, delta: spec.delta })
    }

    #[inline]
    pub fn x(&self, at: At) -> &[f64] {
        match at {
            At::Row(i) => &self.frame.rows[i].x,
            At::Pop(j) => &self.dist.support()[j],
        }
    }

    /// `(π_1, π_2)` for row `i`; `π_2` uses the offset `Δ`.
    #[inline]
    pub fn pi12(&self, i: usize, a1: &[f64], a2: &[f64], gamma: &[f64]) -> Result<(f64, f64)> {
        let row = &self.frame.rows[i];
        let go = self.odds.at_obs(i, gamma);
        let p1 = propensity_checked(dot(self.v1.rows.row(i), a1) + go, row.unit, 1)?;
        let p2 = propensity_checked(dot(self.v2.rows.row(i), a2) + go + self.delta * row.y, row.unit, 2)?;
        Ok((p1, p2))
    }

    #[inline]
    pub fn pi1(&self, i: usize, a1: &[f64], gamma: &[f64]) -> Result<f64> {
        let row = &self.frame.rows[i];
        propensity_checked(dot(self.v1.rows.row(i), a1) + self.odds.at_obs(i, gamma), row.unit, 1)
    }

    pub fn ranges12(&self, a1: &[f64], a2: Option<&[f64]>, gamma: &[f64]) -> Vec<(usize, f64, f64)> {
        let (mut r1, mut r2) = (Range1::default(), Range1::default());
        for (i, row) in self.frame.rows.iter().enumerate() {
            let go = self.odds.at_obs(i, gamma);
            r1.add(crate::math::expit(dot(self.v1.rows.row(i), a1) + go));
            if let Some(a2) = a2 {
                r2.add(crate::math::expit(dot(self.v2.rows.row(i), a2) + go + self.delta * row.y));
            }
        }
        let mut out = vec![(1, r1.min, r1.max)];
        if a2.is_some() {
            out.push((2, r2.min, r2.max));
        }
        out
    }
}

pub(crate) fn add_scaled(out: &mut [f64], s: f64, v: &[f64]) {
    for (o, v) in out.iter_mut().zip(v) {
        *o += s * v;
    }
}

pub(crate) fn set_scaled(out: &mut [f64], s: f64, v: &[f64]) {
    for (o, v) in out.iter_mut().zip(v) {
        *o = s * v;
    }
}

/// Mass-weighted `E_f{h_U}` and `E_f{h_m}` under the tilt `γᵀu + Δy` of `outcome`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn population_imputation(
    core: &Core,
    outcome: &OutcomeBlock,
    odds: &OddsBlock,
    beta: &[f64],
    gamma: &[f64],
    delta: f64,
    u: Option<&UBlock>,
    theta: &[f64],
    eu: &mut [f64],
    em: &mut [f64],
) -> Result<()> {
    eu.fill(0.0);
    em.fill(0.0);
    let mut ubuf = vec![0.0; eu.len()];
    let (mut mbuf, mut scratch) = (vec![0.0; em.len()], vec![0.0; em.len()]);
    let need_law = u.is_some_and(|u| u.needs_law());
    for (j, &mass) in core.dist.mass().iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let at = At::Pop(j);
        let x = core.x(at);
        let cond = odds.tilt(at, x, outcome.base(at, beta), gamma, delta, need_law)?;
        if let Some(u) = u {
            u.expect(at, x, &cond, &mut ubuf);
            add_scaled(eu, mass, &ubuf);
        }
        core.m.imputed(at, cond.mean, theta, &mut mbuf, &mut scratch);
        add_scaled(em, mass, &mbuf);
    }
    Ok(())
}

fn labels(v: &[String]) -> Vec<String> {
    v.to_vec()
}

struct Ipw {
    core: Core,
    u: UBlock,
    a1: Range<usize>,
    a2: Range<usize>,
    g: Range<usize>,
    th: Range<usize>,
    dim: usize,
}

impl MomentFunction for Ipw {
    fn dim(&self) -> usize {
        self.dim
    }

    fn accumulate(&self, p: &[f64], visit: &mut dyn FnMut(usize, f64, &[f64])) -> Result<Aggregate> {
        let c = &self.core;
        let (a1, a2, g, th) = (&p[self.a1.clone()], &p[self.a2.clone()], &p[self.g.clone()], &p[self.th.clone()]);
        let mut phi = vec![0.0; self.dim];
        let (mut mb, mut sc) = (vec![0.0; th.len()], vec![0.0; th.len()]);
        for (i, row) in c.frame.rows.iter().enumerate() {
            let (p1, p2) = c.pi12(i, a1, a2, g)?;
            let late = row.r2 - row.r1;
            set_scaled(&mut phi[self.a1.clone()], row.r1 / p1, c.c1.rows.row(i));
            set_scaled(&mut phi[self.a2.clone()], late / p2 + row.r1, c.c2.rows.row(i));
            set_scaled(&mut phi[self.g.clone()], late / p2 - (1.0 - p1) / p1 * row.r1, self.u.obs.row(i));
            c.m.observed(i, row.y, th, &mut mb, &mut sc);
            set_scaled(&mut phi[self.th.clone()], row.r2 / (p1 + p2 * (1.0 - p1)), &mb);
            visit(row.unit, row.w, &phi);
        }
        let mut population = vec![0.0; self.dim];
        set_scaled(&mut population[self.a1.clone()], -1.0, &c.c1.pop_mean);
        set_scaled(&mut population[self.a2.clone()], -1.0, &c.c2.pop_mean);
        Ok(Aggregate { population, silent: vec![0.0; self.dim] })
    }

    fn silent_weights(&self) -> (f64, f64) {
        self.core.frame.silent
    }

    fn propensity_ranges(&self, p: &[f64]) -> Vec<(usize, f64, f64)> {
        self.core.ranges12(&p[self.a1.clone()], Some(&p[self.a2.clone()]), &p[self.g.clone()])
    }
}

/// Inverse probability weighting system over `(α_1, α_2, γ, θ)`.
pub fn build_ipw(data: &SurveyDataset, spec: &ModelSpec, dist: &CovariateDistribution) -> Result<EquationSystem> {
    let core = Core::new(data, spec, dist, 2)?;
    let uf = spec.odds_calibration.as_ref().unwrap_or(&spec.odds);
    let u = UBlock::new(uf, &core.frame, dist)?;
    if u.dim != core.odds.dim {
        return config("odds-ratio calibration must have one entry per odds-ratio coefficient");
    }
    let mut layout = ParamLayout::new();
    let a1 = layout.push("alpha1", labels(spec.baseline1.labels()));
    let a2 = layout.push("alpha2", labels(spec.baseline2.labels()));
    let g = layout.push("gamma", labels(spec.odds.labels()));
    let th = layout.push("theta", spec.estimand.labels());
    let dim = layout.dim();
    let m = Ipw { core, u, a1, a2, g, th, dim };
    EquationSystem::new("ipw", layout, Arc::new(m), order(&["alpha1", "alpha2", "theta"]))
}

pub(crate) fn order(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

struct Reg {
    core: Core,
    outcome: OutcomeBlock,
    u: UBlock,
    b: Range<usize>,
    a1: Range<usize>,
    g: Range<usize>,
    /// `(α_1, γ)` rows share the calibration `U`.
    ag: Range<usize>,
    th: Range<usize>,
    dim: usize,
}

impl MomentFunction for Reg {
    fn dim(&self) -> usize {
        self.dim
    }

    fn accumulate(&self, p: &[f64], visit: &mut dyn FnMut(usize, f64, &[f64])) -> Result<Aggregate> {
        let c = &self.core;
        let (b, a1, g, th) = (&p[self.b.clone()], &p[self.a1.clone()], &p[self.g.clone()], &p[self.th.clone()]);
        let mut phi = vec![0.0; self.dim];
        let mut hu = vec![0.0; self.u.dim];
        let (mut mo, mut mh, mut sc) = (vec![0.0; th.len()], vec![0.0; th.len()], vec![0.0; th.len()]);
        let need_law = self.u.needs_law();
        for (i, row) in c.frame.rows.iter().enumerate() {
            let at = At::Row(i);
            let base = self.outcome.base(at, b);
            let late = row.r2 - row.r1;
            if late != 0.0 {
                self.outcome.score(i, &base, row.y, &mut phi[self.b.clone()]);
            } else {
                phi[self.b.clone()].fill(0.0);
            }
            let cond = c.odds.tilt(at, &row.x, base, g, c.delta, need_law)?;
            let w = if row.r1 != 0.0 { 1.0 / c.pi1(i, a1, g)? } else { 0.0 } - row.r2;
            self.u.expect(at, &row.x, &cond, &mut hu);
            let out = &mut phi[self.ag.clone()];
            set_scaled(out, w, self.u.obs.row(i));
            add_scaled(out, row.r2, &hu);
            c.m.observed(i, row.y, th, &mut mo, &mut sc);
            c.m.imputed(at, cond.mean, th, &mut mh, &mut sc);
            for ((o, a), h) in phi[self.th.clone()].iter_mut().zip(&mo).zip(&mh) {
                *o = row.r2 * (a - h);
            }
            visit(row.unit, row.w, &phi);
        }
        let mut population = vec![0.0; self.dim];
        let (mut eu, mut em) = (vec![0.0; self.u.dim], vec![0.0; th.len()]);
        population_imputation(c, &self.outcome, &c.odds, b, g, c.delta, Some(&self.u), th, &mut eu, &mut em)?;
        set_scaled(&mut population[self.ag.clone()], -1.0, &eu);
        population[self.th.clone()].copy_from_slice(&em);
        Ok(Aggregate { population, silent: vec![0.0; self.dim] })
    }

    fn silent_weights(&self) -> (f64, f64) {
        self.core.frame.silent
    }

    fn propensity_ranges(&self, p: &[f64]) -> Vec<(usize, f64, f64)> {
        self.core.ranges12(&p[self.a1.clone()], None, &p[self.g.clone()])
    }
}

/// Default calibration of the regression imputation equation: `(v_1(x), u(x, y))`.
pub(crate) fn reg_default_u(spec: &ModelSpec) -> Result<OutcomeFeatures> {
    OutcomeFeatures::affine(
        spec.baseline1.terms().iter().map(|&t| crate::model::YTerm::Covariate(t)).collect(),
        &[],
    )
    .concat(&spec.odds)
    .map(|u| relabel(u, spec.baseline1.labels().iter().chain(spec.odds.labels()).cloned().collect()))
}

fn relabel(u: OutcomeFeatures, new: Vec<String>) -> OutcomeFeatures {
    match u {
        OutcomeFeatures::Affine { terms, .. } => OutcomeFeatures::Affine { terms, labels: new },
        other => other,
    }
}

/// Regression imputation system over `(β, α_1, γ, θ)`.
pub fn build_reg(data: &SurveyDataset, spec: &ModelSpec, dist: &CovariateDistribution) -> Result<EquationSystem> {
    let core = Core::new(data, spec, dist, 2)?;
    let outcome = OutcomeBlock::new(spec.family, &spec.outcome, &core.frame, dist)?;
    let uf = match &spec.reg_calibration {
        Some(u) => u.clone(),
        None => reg_default_u(spec)?,
    };
    let u = UBlock::new(&uf, &core.frame, dist)?;
    if u.dim != core.v1.dim + core.odds.dim {
        return config("regression calibration must have one entry per (α_1, γ) coefficient");
    }
    let mut layout = ParamLayout::new();
    let b = layout.push("beta", outcome.labels.clone());
    let a1 = layout.push("alpha1", labels(spec.baseline1.labels()));
    let g = layout.push("gamma", labels(spec.odds.labels()));
    let th = layout.push("theta", spec.estimand.labels());
    let dim = layout.dim();
    let ag = a1.start..g.end;
    let m = Reg { core, outcome, u, b, a1, g, ag, th, dim };
    EquationSystem::new("reg", layout, Arc::new(m), order(&["beta", "alpha1", "theta"]))
}

struct Dr {
    core: Core,
    outcome: OutcomeBlock,
    u: UBlock,
    a1: Range<usize>,
    a2: Range<usize>,
    b: Range<usize>,
    g: Range<usize>,
    th: Range<usize>,
    dim: usize,
}

impl MomentFunction for Dr {
    fn dim(&self) -> usize {
        self.dim
    }

    fn accumulate(&self, p: &[f64], visit: &mut dyn FnMut(usize, f64, &[f64])) -> Result<Aggregate> {
        let c = &self.core;
        let (a1, a2, b, g, th) = (
            &p[self.a1.clone()],
            &p[self.a2.clone()],
            &p[self.b.clone()],
            &p[self.g.clone()],
            &p[self.th.clone()],
        );
        let mut phi = vec![0.0; self.dim];
        let mut gu = vec![0.0; self.u.dim];
        let (mut mo, mut mh, mut sc) = (vec![0.0; th.len()], vec![0.0; th.len()], vec![0.0; th.len()]);
        let need_law = self.u.needs_law();
        for (i, row) in c.frame.rows.iter().enumerate() {
            let at = At::Row(i);
            let late = row.r2 - row.r1;
            let p1 = c.pi1(i, a1, g)?;
            let inv2 = if late != 0.0 { late / c.pi12(i, a1, a2, g)?.1 } else { 0.0 };
            set_scaled(&mut phi[self.a1.clone()], row.r1 / p1, c.c1.rows.row(i));
            set_scaled(&mut phi[self.a2.clone()], inv2 + row.r1, c.c2.rows.row(i));
            let base = self.outcome.base(at, b);
            if late != 0.0 {
                self.outcome.score(i, &base, row.y, &mut phi[self.b.clone()]);
            } else {
                phi[self.b.clone()].fill(0.0);
            }
            self.u.expect(at, &row.x, &base.untilted(need_law), &mut gu);
            let w = row.r1 - p1 / (1.0 - p1) * inv2;
            for ((o, u), gv) in phi[self.g.clone()].iter_mut().zip(self.u.obs.row(i)).zip(&gu) {
                *o = w * (u - gv);
            }
            let cond = c.odds.tilt(at, &row.x, base, g, c.delta, false)?;
            c.m.observed(i, row.y, th, &mut mo, &mut sc);
            c.m.imputed(at, cond.mean, th, &mut mh, &mut sc);
            let w = row.r1 + inv2;
            for ((o, a), h) in phi[self.th.clone()].iter_mut().zip(&mo).zip(&mh) {
                *o = w * (a - h);
            }
            visit(row.unit, row.w, &phi);
        }
        let mut population = vec![0.0; self.dim];
        set_scaled(&mut population[self.a1.clone()], -1.0, &c.c1.pop_mean);
        set_scaled(&mut population[self.a2.clone()], -1.0, &c.c2.pop_mean);
        let mut em = vec![0.0; th.len()];
        population_imputation(c, &self.outcome, &c.odds, b, g, c.delta, None, th, &mut [], &mut em)?;
        population[self.th.clone()].copy_from_slice(&em);
        Ok(Aggregate { population, silent: vec![0.0; self.dim] })
    }

    fn silent_weights(&self) -> (f64, f64) {
        self.core.frame.silent
    }

    fn propensity_ranges(&self, p: &[f64]) -> Vec<(usize, f64, f64)> {
        self.core.ranges12(&p[self.a1.clone()], Some(&p[self.a2.clone()]), &p[self.g.clone()])
    }
}

/// Doubly robust system over `(α_1, α_2, β, γ, θ)`.
pub fn build_dr(data: &SurveyDataset, spec: &ModelSpec, dist: &CovariateDistribution) -> Result<EquationSystem> {
    let core = Core::new(data, spec, dist, 2)?;
    let outcome = OutcomeBlock::new(spec.family, &spec.outcome, &core.frame, dist)?;
    let uf = spec.odds_calibration.as_ref().unwrap_or(&spec.odds);
    let u = UBlock::new(uf, &core.frame, dist)?;
    if u.dim != core.odds.dim {
        return config("odds-ratio calibration must have one entry per odds-ratio coefficient");
    }
    let mut layout = ParamLayout::new();
    let a1 = layout.push("alpha1", labels(spec.baseline1.labels()));
    let a2 = layout.push("alpha2", labels(spec.baseline2.labels()));
    let b = layout.push("beta", outcome.labels.clone());
    let g = layout.push("gamma", labels(spec.odds.labels()));
    let th = layout.push("theta", spec.estimand.labels());
    let dim = layout.dim();
    let m = Dr { core, outcome, u, a1, a2, b, g, th, dim };
    EquationSystem::new("dr", layout, Arc::new(m), order(&["alpha1", "alpha2", "beta", "theta"]))
}

/// Any two-call system with the second-call odds ratio offset by a fixed `Δ`.
pub fn build_sensitivity(
    kind: SorKind,
    data: &SurveyDataset,
    spec: &ModelSpec,
    dist: &CovariateDistribution,
    delta: f64,
) -> Result<EquationSystem> {
    let spec = spec.clone().with_delta(delta);
    match kind {
        SorKind::Ipw => build_ipw(data, &spec, dist),
        SorKind::Reg => build_reg(data, &spec, dist),
        SorKind::Dr => build_dr(data, &spec, dist),
    }
}
