//! Systems that use every callback through the last call `K ≥ 3`.
//!
//! Respondents after call 2 are "late": they enter only the last-call
//! equations, which carry their own baseline `A_K`, odds ratio `Γ_K` and
//! outcome model `f_K` fitted on the late respondents.

use std::ops::Range;
use std::sync::Arc;

use crate::error::{config, Result};
use crate::math::dot;
use crate::model::{CovariateDistribution, FeatureMap, OutcomeFeatures, SurveyDataset, YTerm};

use super::frame::{propensity_checked, At, DesignBlock, OddsBlock, OutcomeBlock, Range1, UBlock};
use super::system::{Aggregate, EquationSystem, MomentFunction, ParamLayout};
use super::two_call::{add_scaled, order, population_imputation, reg_default_u, set_scaled, Core};
use super::{LastCallSpec, ModelSpec};

struct Last {
    v: DesignBlock,
    odds: OddsBlock,
}

impl Last {
    fn new(core: &Core, last: &LastCallSpec, dist: &CovariateDistribution) -> Result<Self> {
        Ok(Self {
            v: DesignBlock::new(&last.baseline, &core.frame, dist)?,
            odds: OddsBlock::new(&last.odds, &core.frame, dist)?,
        })
    }

    fn pi(&self, core: &Core, i: usize, a: &[f64], g: &[f64]) -> Result<f64> {
        let row = &core.frame.rows[i];
        propensity_checked(dot(self.v.rows.row(i), a) + self.odds.at_obs(i, g), row.unit, usize::MAX)
    }
}

fn setup(data: &SurveyDataset, spec: &ModelSpec, dist: &CovariateDistribution) -> Result<(Core, LastCallSpec)> {
    if data.calls() < 3 {
        return config(format!("multi-call systems need at least 3 calls, data has {}", data.calls()));
    }
    let last = spec
        .last
        .clone()
        .ok_or_else(|| crate::Error::Config("multi-call system needs last-call models".into()))?;
    Ok((Core::new(data, spec, dist, data.calls())?, last))
}

fn covariate_terms(map: &FeatureMap) -> OutcomeFeatures {
    OutcomeFeatures::affine(map.terms().iter().map(|&t| YTerm::Covariate(t)).collect(), &[])
}

/// Propensity ranges with the last call reported as call `K`.
fn ranges(core: &Core, last: &Last, k: usize, p: &[f64], a1: &[f64], a2: Option<&[f64]>, g: &[f64], ak: Range<usize>, gk: Range<usize>) -> Vec<(usize, f64, f64)> {
    let mut out = core.ranges12(a1, a2, g);
    let mut r = Range1::default();
    for i in 0..core.frame.len() {
        r.add(crate::math::expit(dot(last.v.rows.row(i), &p[ak.clone()]) + last.odds.at_obs(i, &p[gk.clone()])));
    }
    out.push((k, r.min, r.max));
    out
}

fn fix_call(e: crate::Error, k: usize) -> crate::Error {
    match e {
        crate::Error::Positivity { unit, call, value } if call == usize::MAX => {
            crate::Error::Positivity { unit, call: k, value }
        }
        e => e,
    }
}

struct MultiIpw {
    core: Core,
    last: Last,
    u: UBlock,
    w: UBlock,
    k: usize,
    a1: Range<usize>,
    a2: Range<usize>,
    g: Range<usize>,
    ak: Range<usize>,
    gk: Range<usize>,
    th: Range<usize>,
    dim: usize,
}

impl MomentFunction for MultiIpw {
    fn dim(&self) -> usize {
        self.dim
    }

    fn accumulate(&self, p: &[f64], visit: &mut dyn FnMut(usize, f64, &[f64])) -> Result<Aggregate> {
        let c = &self.core;
        let (a1, a2, g, ak, gk, th) = (
            &p[self.a1.clone()],
            &p[self.a2.clone()],
            &p[self.g.clone()],
            &p[self.ak.clone()],
            &p[self.gk.clone()],
            &p[self.th.clone()],
        );
        let mut phi = vec![0.0; self.dim];
        let (mut mb, mut sc) = (vec![0.0; th.len()], vec![0.0; th.len()]);
        let wk = self.ak.start..self.gk.end;
        for (i, row) in c.frame.rows.iter().enumerate() {
            let (p1, p2) = c.pi12(i, a1, a2, g)?;
            let late = row.r2 - row.r1;
            set_scaled(&mut phi[self.a1.clone()], row.r1 / p1, c.c1.rows.row(i));
            set_scaled(&mut phi[self.a2.clone()], late / p2 + row.r1, c.c2.rows.row(i));
            set_scaled(&mut phi[self.g.clone()], late / p2 - (1.0 - p1) / p1 * row.r1, self.u.obs.row(i));
            let cum2 = p1 + (1.0 - p1) * p2;
            let pk = self.last.pi(c, i, ak, gk).map_err(|e| fix_call(e, self.k))?;
            let very_late = 1.0 - row.r2;
            set_scaled(&mut phi[wk.clone()], very_late / pk - (1.0 - cum2) / cum2 * row.r2, self.w.obs.row(i));
            c.m.observed(i, row.y, th, &mut mb, &mut sc);
            set_scaled(&mut phi[self.th.clone()], 1.0 / (cum2 + (1.0 - cum2) * pk), &mb);
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
        ranges(&self.core, &self.last, self.k, p, &p[self.a1.clone()], Some(&p[self.a2.clone()]), &p[self.g.clone()], self.ak.clone(), self.gk.clone())
    }
}

/// Inverse probability weighting with all callbacks, over
/// `(α_1, α_2, γ, α_K, γ_K, θ)`.
pub fn build_multicall_ipw(
    data: &SurveyDataset,
    spec: &ModelSpec,
    dist: &CovariateDistribution,
) -> Result<EquationSystem> {
    let (core, ls) = setup(data, spec, dist)?;
    let last = Last::new(&core, &ls, dist)?;
    let u = UBlock::new(spec.odds_calibration.as_ref().unwrap_or(&spec.odds), &core.frame, dist)?;
    let wf = match &ls.ipw_calibration {
        Some(w) => w.clone(),
        None => covariate_terms(&ls.baseline).concat(&ls.odds)?,
    };
    let w = UBlock::new(&wf, &core.frame, dist)?;
    if u.dim != core.odds.dim || w.dim != last.v.dim + last.odds.dim {
        return config("calibration dimensions do not match the propensity parameters");
    }
    let mut layout = ParamLayout::new();
    let a1 = layout.push("alpha1", spec.baseline1.labels().to_vec());
    let a2 = layout.push("alpha2", spec.baseline2.labels().to_vec());
    let g = layout.push("gamma", spec.odds.labels().to_vec());
    let ak = layout.push("alpha_k", ls.baseline.labels().to_vec());
    let gk = layout.push("gamma_k", ls.odds.labels().to_vec());
    let th = layout.push("theta", spec.estimand.labels());
    let dim = layout.dim();
    let k = data.calls();
    let m = MultiIpw { core, last, u, w, k, a1, a2, g, ak, gk, th, dim };
    EquationSystem::new("ipw_multicall", layout, Arc::new(m), order(&["alpha1", "alpha2", "alpha_k", "theta"]))
}

struct MultiReg {
    core: Core,
    last: Last,
    f2: OutcomeBlock,
    fk: OutcomeBlock,
    u: UBlock,
    w: UBlock,
    b: Range<usize>,
    a1: Range<usize>,
    g: Range<usize>,
    bk: Range<usize>,
    gk: Range<usize>,
    th: Range<usize>,
    dim: usize,
}

impl MomentFunction for MultiReg {
    fn dim(&self) -> usize {
        self.dim
    }

    fn accumulate(&self, p: &[f64], visit: &mut dyn FnMut(usize, f64, &[f64])) -> Result<Aggregate> {
        let c = &self.core;
        let (b, a1, g, bk, gk, th) = (
            &p[self.b.clone()],
            &p[self.a1.clone()],
            &p[self.g.clone()],
            &p[self.bk.clone()],
            &p[self.gk.clone()],
            &p[self.th.clone()],
        );
        let ag = self.a1.start..self.g.end;
        let mut phi = vec![0.0; self.dim];
        let (mut hu, mut hw) = (vec![0.0; self.u.dim], vec![0.0; self.w.dim]);
        let (mut mo, mut mh, mut sc) = (vec![0.0; th.len()], vec![0.0; th.len()], vec![0.0; th.len()]);
        for (i, row) in c.frame.rows.iter().enumerate() {
            let at = At::Row(i);
            phi.fill(0.0);
            let inv1 = if row.r1 != 0.0 { 1.0 / c.pi1(i, a1, g)? } else { 0.0 };
            if row.r2 != 0.0 {
                let base = self.f2.base(at, b);
                if row.r1 == 0.0 {
                    self.f2.score(i, &base, row.y, &mut phi[self.b.clone()]);
                }
                let cond = c.odds.tilt(at, &row.x, base, g, c.delta, self.u.needs_law())?;
                self.u.expect(at, &row.x, &cond, &mut hu);
                let out = &mut phi[ag.clone()];
                set_scaled(out, inv1 - 1.0, self.u.obs.row(i));
                add_scaled(out, 1.0, &hu);
            }
            let base = self.fk.base(at, bk);
            if row.r2 == 0.0 {
                self.fk.score(i, &base, row.y, &mut phi[self.bk.clone()]);
            }
            let cond = self.last.odds.tilt(at, &row.x, base, gk, 0.0, self.w.needs_law())?;
            self.w.expect(at, &row.x, &cond, &mut hw);
            let out = &mut phi[self.gk.clone()];
            set_scaled(out, inv1 - 1.0, self.w.obs.row(i));
            add_scaled(out, 1.0, &hw);
            c.m.observed(i, row.y, th, &mut mo, &mut sc);
            c.m.imputed(at, cond.mean, th, &mut mh, &mut sc);
            for ((o, a), h) in phi[self.th.clone()].iter_mut().zip(&mo).zip(&mh) {
                *o = a - h;
            }
            visit(row.unit, row.w, &phi);
        }
        let mut population = vec![0.0; self.dim];
        let (mut eu, mut em) = (vec![0.0; self.u.dim], vec![0.0; th.len()]);
        population_imputation(c, &self.f2, &c.odds, b, g, c.delta, Some(&self.u), th, &mut eu, &mut em)?;
        set_scaled(&mut population[ag], -1.0, &eu);
        let mut ew = vec![0.0; self.w.dim];
        population_imputation(c, &self.fk, &self.last.odds, bk, gk, 0.0, Some(&self.w), th, &mut ew, &mut em)?;
        set_scaled(&mut population[self.gk.clone()], -1.0, &ew);
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

/// Regression imputation with all callbacks, over `(β, α_1, γ, β_K, γ_K, θ)`.
pub fn build_multicall_reg(
    data: &SurveyDataset,
    spec: &ModelSpec,
    dist: &CovariateDistribution,
) -> Result<EquationSystem> {
    let (core, ls) = setup(data, spec, dist)?;
    let last = Last::new(&core, &ls, dist)?;
    let f2 = OutcomeBlock::new(spec.family, &spec.outcome, &core.frame, dist)?;
    let fk = OutcomeBlock::new(spec.family, &ls.outcome, &core.frame, dist)?;
    let uf = match &spec.reg_calibration {
        Some(u) => u.clone(),
        None => reg_default_u(spec)?,
    };
    let u = UBlock::new(&uf, &core.frame, dist)?;
    let w = UBlock::new(ls.reg_calibration.as_ref().unwrap_or(&ls.odds), &core.frame, dist)?;
    if u.dim != core.v1.dim + core.odds.dim || w.dim != last.odds.dim {
        return config("calibration dimensions do not match the propensity parameters");
    }
    let mut layout = ParamLayout::new();
    let b = layout.push("beta", f2.labels.clone());
    let a1 = layout.push("alpha1", spec.baseline1.labels().to_vec());
    let g = layout.push("gamma", spec.odds.labels().to_vec());
    let bk = layout.push("beta_k", fk.labels.clone());
    let gk = layout.push("gamma_k", ls.odds.labels().to_vec());
    let th = layout.push("theta", spec.estimand.labels());
    let dim = layout.dim();
    let m = MultiReg { core, last, f2, fk, u, w, b, a1, g, bk, gk, th, dim };
    EquationSystem::new("reg_multicall", layout, Arc::new(m), order(&["beta", "alpha1", "beta_k", "theta"]))
}

struct MultiDr {
    core: Core,
    last: Last,
    f2: OutcomeBlock,
    fk: OutcomeBlock,
    u: UBlock,
    v3: DesignBlock,
    u3: UBlock,
    k: usize,
    a1: Range<usize>,
    a2: Range<usize>,
    b: Range<usize>,
    g: Range<usize>,
    ak: Range<usize>,
    bk: Range<usize>,
    gk: Range<usize>,
    th: Range<usize>,
    dim: usize,
}

impl MomentFunction for MultiDr {
    fn dim(&self) -> usize {
        self.dim
    }

    fn accumulate(&self, p: &[f64], visit: &mut dyn FnMut(usize, f64, &[f64])) -> Result<Aggregate> {
        let c = &self.core;
        let (a1, a2, b, g) = (&p[self.a1.clone()], &p[self.a2.clone()], &p[self.b.clone()], &p[self.g.clone()]);
        let (ak, bk, gk, th) = (&p[self.ak.clone()], &p[self.bk.clone()], &p[self.gk.clone()], &p[self.th.clone()]);
        let mut phi = vec![0.0; self.dim];
        let (mut gu, mut hu) = (vec![0.0; self.u.dim], vec![0.0; self.u3.dim]);
        let (mut mo, mut mh, mut sc) = (vec![0.0; th.len()], vec![0.0; th.len()], vec![0.0; th.len()]);
        for (i, row) in c.frame.rows.iter().enumerate() {
            let at = At::Row(i);
            phi.fill(0.0);
            let p1 = c.pi1(i, a1, g)?;
            if row.r2 != 0.0 {
                let late = row.r2 - row.r1;
                let inv2 = if late != 0.0 { 1.0 / c.pi12(i, a1, a2, g)?.1 } else { 0.0 };
                set_scaled(&mut phi[self.a1.clone()], row.r1 / p1, c.c1.rows.row(i));
                set_scaled(&mut phi[self.a2.clone()], inv2 + row.r1, c.c2.rows.row(i));
                let base = self.f2.base(at, b);
                if late != 0.0 {
                    self.f2.score(i, &base, row.y, &mut phi[self.b.clone()]);
                }
                self.u.expect(at, &row.x, &base.untilted(self.u.needs_law()), &mut gu);
                let w = row.r1 - p1 / (1.0 - p1) * inv2;
                for ((o, u), gv) in phi[self.g.clone()].iter_mut().zip(self.u.obs.row(i)).zip(&gu) {
                    *o = w * (u - gv);
                }
            }
            let very_late = 1.0 - row.r2;
            let invk = if very_late != 0.0 {
                1.0 / self.last.pi(c, i, ak, gk).map_err(|e| fix_call(e, self.k))?
            } else {
                0.0
            };
            let coef = invk + row.r2 - row.r1 / p1;
            set_scaled(&mut phi[self.ak.clone()], coef, self.v3.rows.row(i));
            let base = self.fk.base(at, bk);
            if very_late != 0.0 {
                self.fk.score(i, &base, row.y, &mut phi[self.bk.clone()]);
            }
            let cond = self.last.odds.tilt(at, &row.x, base, gk, 0.0, self.u3.needs_law())?;
            self.u3.expect(at, &row.x, &cond, &mut hu);
            for ((o, u), h) in phi[self.gk.clone()].iter_mut().zip(self.u3.obs.row(i)).zip(&hu) {
                *o = coef * (u - h);
            }
            c.m.observed(i, row.y, th, &mut mo, &mut sc);
            c.m.imputed(at, cond.mean, th, &mut mh, &mut sc);
            let w = row.r2 + invk;
            for ((o, a), h) in phi[self.th.clone()].iter_mut().zip(&mo).zip(&mh) {
                *o = w * (a - h);
            }
            visit(row.unit, row.w, &phi);
        }
        let mut population = vec![0.0; self.dim];
        set_scaled(&mut population[self.a1.clone()], -1.0, &c.c1.pop_mean);
        set_scaled(&mut population[self.a2.clone()], -1.0, &c.c2.pop_mean);
        let mut em = vec![0.0; th.len()];
        population_imputation(c, &self.fk, &self.last.odds, bk, gk, 0.0, None, th, &mut [], &mut em)?;
        population[self.th.clone()].copy_from_slice(&em);
        Ok(Aggregate { population, silent: vec![0.0; self.dim] })
    }

    fn silent_weights(&self) -> (f64, f64) {
        self.core.frame.silent
    }

    fn propensity_ranges(&self, p: &[f64]) -> Vec<(usize, f64, f64)> {
        ranges(&self.core, &self.last, self.k, p, &p[self.a1.clone()], Some(&p[self.a2.clone()]), &p[self.g.clone()], self.ak.clone(), self.gk.clone())
    }
}

/// Doubly robust estimation with all callbacks, over
/// `(α_1, α_2, β, γ, α_K, β_K, γ_K, θ)`.
pub fn build_multicall_dr(
    data: &SurveyDataset,
    spec: &ModelSpec,
    dist: &CovariateDistribution,
) -> Result<EquationSystem> {
    let (core, ls) = setup(data, spec, dist)?;
    let last = Last::new(&core, &ls, dist)?;
    let f2 = OutcomeBlock::new(spec.family, &spec.outcome, &core.frame, dist)?;
    let fk = OutcomeBlock::new(spec.family, &ls.outcome, &core.frame, dist)?;
    let u = UBlock::new(spec.odds_calibration.as_ref().unwrap_or(&spec.odds), &core.frame, dist)?;
    let v3 = DesignBlock::new(ls.dr_baseline_calibration.as_ref().unwrap_or(&ls.baseline), &core.frame, dist)?;
    let u3 = UBlock::new(ls.dr_odds_calibration.as_ref().unwrap_or(&ls.odds), &core.frame, dist)?;
    if u.dim != core.odds.dim || v3.dim != last.v.dim || u3.dim != last.odds.dim {
        return config("calibration dimensions do not match the propensity parameters");
    }
    let mut layout = ParamLayout::new();
    let a1 = layout.push("alpha1", spec.baseline1.labels().to_vec());
    let a2 = layout.push("alpha2", spec.baseline2.labels().to_vec());
    let b = layout.push("beta", f2.labels.clone());
    let g = layout.push("gamma", spec.odds.labels().to_vec());
    let ak = layout.push("alpha_k", ls.baseline.labels().to_vec());
    let bk = layout.push("beta_k", fk.labels.clone());
    let gk = layout.push("gamma_k", ls.odds.labels().to_vec());
    let th = layout.push("theta", spec.estimand.labels());
    let dim = layout.dim();
    let k = data.calls();
    let m = MultiDr { core, last, f2, fk, u, v3, u3, k, a1, a2, b, g, ak, bk, gk, th, dim };
    EquationSystem::new(
        "dr_multicall",
        layout,
        Arc::new(m),
        order(&["alpha1", "alpha2", "beta", "alpha_k", "beta_k", "theta"]),
    )
}
