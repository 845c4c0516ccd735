use proptest::prelude::*;
use rand::Rng;

use sor::equations::*;
use sor::estimate::{fit, FitOptions};
use sor::math::expit;
use sor::model::*;
use sor::rng::substream;
use sor::simulate::{generate, population, true_mean, LastCall, ScenarioSpec, Setting};
use sor::solver::solve;
use sor::Error;

fn names(n: &[&str]) -> Vec<String> {
    n.iter().map(|s| s.to_string()).collect()
}

/// Units with one always-observed covariate; `first` is the first responding call.
fn dataset(rows: &[(f64, f64, Option<usize>, f64)], calls: usize) -> SurveyDataset {
    let units = rows
        .iter()
        .map(|&(w, x, first, y)| SurveyUnit {
            weight: w,
            responses: (1..=calls).map(|k| first.is_some_and(|f| f <= k)).collect(),
            outcome: first.map(|_| y),
            missing_covariates: first.map(|_| vec![]),
            observed_covariates: vec![x],
        })
        .collect();
    SurveyDataset::new(vec![], names(&["x"]), calls, units).unwrap()
}

/// Random weights, `x ∈ {−1, 0, 1}`, binary `y`, first response drawn from `calls`.
fn random_rows(seed: u64, n: usize, calls: &[Option<usize>]) -> Vec<(f64, f64, Option<usize>, f64)> {
    let mut rng = substream(seed, "equations-test", 0);
    (0..n)
        .map(|_| {
            let w = rng.random_range(0.5..2.0);
            let x = rng.random_range(-1..=1) as f64;
            let y = (rng.random::<f64>() < expit(0.3 + x)) as u8 as f64;
            (w, x, calls[rng.random_range(0..calls.len())], y)
        })
        .collect()
}

fn weighted_mean(rows: &[(f64, f64, Option<usize>, f64)]) -> f64 {
    let (mut s, mut w) = (0.0, 0.0);
    for r in rows.iter().filter(|r| r.2.is_some()) {
        s += r.0 * r.3;
        w += r.0;
    }
    s / w
}

fn spec(family: Family) -> ModelSpec {
    ModelSpec::standard(&names(&["x"]), family)
}

fn intercept_spec() -> ModelSpec {
    let one = FeatureMap::intercept_only();
    ModelSpec {
        baseline1: one.clone(),
        baseline2: one.clone(),
        outcome: one,
        ..spec(Family::Binary)
    }
}

fn empirical(data: &SurveyDataset) -> CovariateDistribution {
    data.design_distribution(DesignWeighting::Empirical).unwrap()
}

/// Solves `system` over the coordinates outside `fixed`, which keep their value in `base`.
fn solve_free(system: &EquationSystem, fixed: &[&str], base: Vec<f64>) -> Vec<f64> {
    let layout = system.layout();
    let free: Vec<usize> = (0..system.dim())
        .filter(|j| !fixed.iter().any(|b| layout.range(b).unwrap().contains(j)))
        .collect();
    let reduced = system.restrict(free.clone(), base.clone()).unwrap();
    let init: Vec<f64> = free.iter().map(|&j| base[j]).collect();
    let res = solve(&reduced, &init, &Default::default()).unwrap();
    assert!(res.converged, "{}", system.name());
    EquationSystem::expand(&free, &base, &res.params)
}

fn theta(system: &EquationSystem, params: &[f64]) -> f64 {
    params[system.layout().range("theta").unwrap().start]
}

fn set(system: &EquationSystem, params: &mut [f64], block: &str, value: &[f64]) {
    params[system.layout().range(block).unwrap()].copy_from_slice(value);
}

#[test]
fn ipw_with_fixed_zero_odds_and_full_response_is_weighted_mean() {
    let rows = random_rows(1, 60, &[Some(1)]);
    let data = dataset(&rows, 2);
    let s = build_ipw(&data, &spec(Family::Binary), &empirical(&data)).unwrap();
    let mut base = vec![0.0; s.dim()];
    set(&s, &mut base, "alpha1", &[0.4, 0.0]);
    let p = solve_free(&s, &["alpha1", "alpha2", "gamma"], base);
    let d = theta(&s, &p) - weighted_mean(&rows);
    assert!(d.abs() < 1e-8, "{d}");
}

#[test]
fn reg_with_zero_odds_and_full_response_is_weighted_mean() {
    let rows = random_rows(2, 80, &[Some(1), Some(2)]);
    let data = dataset(&rows, 2);
    let s = build_reg(&data, &spec(Family::Binary), &empirical(&data)).unwrap();
    let p = solve_free(&s, &["gamma"], vec![0.0; s.dim()]);
    assert!((theta(&s, &p) - weighted_mean(&rows)).abs() < 1e-10);
}

#[test]
fn dr_with_zero_odds_and_full_response_ignores_outcome_model() {
    let rows = random_rows(3, 80, &[Some(1), Some(2)]);
    let data = dataset(&rows, 2);
    let s = build_dr(&data, &spec(Family::Binary), &empirical(&data)).unwrap();
    for beta in [[0.0, 0.0], [2.0, -3.0], [-1.0, 0.5]] {
        let mut base = vec![0.0; s.dim()];
        // π_2 within 3e-9 of one
        set(&s, &mut base, "alpha2", &[20.0, 0.0]);
        set(&s, &mut base, "beta", &beta);
        let p = solve_free(&s, &["alpha2", "beta", "gamma"], base);
        assert!((theta(&s, &p) - weighted_mean(&rows)).abs() < 1e-7);
    }
}

#[test]
fn every_system_is_square() {
    let rows = random_rows(4, 200, &[None, Some(1), Some(2), Some(3)]);
    let data3 = dataset(&rows, 3);
    let data2 = data3.collapse_calls(2).unwrap();
    let dist = empirical(&data3);
    let sp = spec(Family::Binary).with_standard_last_call();
    let systems = vec![
        build_ipw(&data2, &sp, &dist).unwrap(),
        build_reg(&data2, &sp, &dist).unwrap(),
        build_dr(&data2, &sp, &dist).unwrap(),
        build_multicall_ipw(&data3, &sp, &dist).unwrap(),
        build_multicall_reg(&data3, &sp, &dist).unwrap(),
        build_multicall_dr(&data3, &sp, &dist).unwrap(),
        mar_system(SorKind::Dr, &data2, &sp, &dist).unwrap(),
        cc_system(&data2, &EstimandSpec::Mean).unwrap(),
        cor_system(&data2).unwrap(),
        corx_system(&data2, Family::Binary, &sp.outcome, &dist).unwrap().system,
        pc_system(&data2).unwrap(),
    ];
    for s in systems {
        let p = vec![0.1; s.dim()];
        assert_eq!(s.residual(&p).unwrap().len(), s.dim(), "{}", s.name());
        assert_eq!(s.layout().coordinates().len(), s.dim());
    }
}

#[test]
fn sensitivity_at_zero_is_the_parent_system() {
    let rows = random_rows(5, 150, &[None, Some(1), Some(2)]);
    let data = dataset(&rows, 2);
    let dist = empirical(&data);
    let sp = spec(Family::Binary);
    for kind in [SorKind::Ipw, SorKind::Reg, SorKind::Dr] {
        let parent = match kind {
            SorKind::Ipw => build_ipw(&data, &sp, &dist),
            SorKind::Reg => build_reg(&data, &sp, &dist),
            SorKind::Dr => build_dr(&data, &sp, &dist),
        }
        .unwrap();
        let zero = build_sensitivity(kind, &data, &sp, &dist, 0.0).unwrap();
        let shifted = build_sensitivity(kind, &data, &sp, &dist, 0.3).unwrap();
        let p: Vec<f64> = (0..parent.dim()).map(|j| 0.1 * j as f64 - 0.2).collect();
        let a = parent.residual(&p).unwrap();
        let b = zero.residual(&p).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a, shifted.residual(&p).unwrap());
    }
}

#[test]
fn positivity_violation_names_the_unit() {
    let rows = random_rows(6, 20, &[None, Some(1), Some(2)]);
    let data = dataset(&rows, 2);
    let s = build_ipw(&data, &spec(Family::Binary), &empirical(&data)).unwrap();
    let mut p = vec![0.0; s.dim()];
    set(&s, &mut p, "alpha1", &[40.0, 0.0]);
    match s.residual(&p) {
        Err(Error::Positivity { unit, call: 1, value }) => {
            assert_eq!(unit, rows.iter().position(|r| r.2.is_some()).unwrap());
            assert!(value > 1.0 - 1e-10);
        }
        other => panic!("expected a positivity error, got {other:?}"),
    }
}

#[test]
fn cc_examples() {
    let opts = FitOptions::default();
    let rows = random_rows(7, 50, &[Some(1), Some(2)]);
    let est = cc_estimator(&dataset(&rows, 2), &EstimandSpec::Mean, &opts).unwrap();
    let d = est.first("theta").unwrap().estimate - weighted_mean(&rows);
    assert!(d.abs() < 1e-8, "{d}");

    let single = [(1.0, 0.0, Some(2), 1.0), (2.0, 1.0, None, 0.0), (1.0, -1.0, None, 0.0)];
    let est = cc_estimator(&dataset(&single, 2), &EstimandSpec::Mean, &opts).unwrap();
    assert!((est.first("theta").unwrap().estimate - 1.0).abs() < 1e-8);
}

#[test]
fn mar_without_covariate_effects() {
    let rows = random_rows(8, 300, &[None, Some(1), Some(2)]);
    let data = dataset(&rows, 2);
    let opts = FitOptions::default();
    let dist = empirical(&data);
    let cc = cc_estimator(&data, &EstimandSpec::Mean, &opts).unwrap().first("theta").unwrap().estimate;
    let ipw = mar_estimator(SorKind::Ipw, &data, &intercept_spec(), &dist, &opts).unwrap();
    assert!(ipw.converged && ipw.block("gamma").is_empty());
    let d = ipw.first("theta").unwrap().estimate - cc;
    assert!(d.abs() < 1e-8, "{d}");

    // DR keeps first-call answers and gives the rest the second-call mean
    let total: f64 = rows.iter().map(|r| r.0).sum();
    let (mut first_y, mut first_w, mut late_y, mut late_w) = (0.0, 0.0, 0.0, 0.0);
    for r in &rows {
        match r.2 {
            Some(1) => (first_y, first_w) = (first_y + r.0 * r.3, first_w + r.0),
            Some(_) => (late_y, late_w) = (late_y + r.0 * r.3, late_w + r.0),
            None => {}
        }
    }
    let oracle = (first_y + (total - first_w) * late_y / late_w) / total;
    let dr = mar_estimator(SorKind::Dr, &data, &intercept_spec(), &dist, &opts).unwrap();
    let d = dr.first("theta").unwrap().estimate - oracle;
    assert!(d.abs() < 1e-8, "{d}");
}

#[test]
fn cor_examples() {
    let opts = FitOptions::default();
    // every respondent answered at the last call
    let rows = random_rows(9, 100, &[None, Some(2)]);
    let data = dataset(&rows, 2);
    let cc = cc_estimator(&data, &EstimandSpec::Mean, &opts).unwrap().first("theta").unwrap().estimate;
    let cor = cor_estimator(&data, &EstimandSpec::Mean, &opts).unwrap();
    assert!((cor.first("theta").unwrap().estimate - cc).abs() < 1e-8);

    let ones: Vec<_> = random_rows(10, 100, &[None, Some(1), Some(2)]).into_iter().map(|r| (r.0, r.1, r.2, 1.0)).collect();
    let data = dataset(&ones, 2);
    let cor = cor_estimator(&data, &EstimandSpec::Mean, &opts).unwrap();
    assert!((cor.first("theta").unwrap().estimate - 1.0).abs() < 1e-8);
    let corx = corx_estimator(&data, &spec(Family::Binary), &empirical(&data), &opts).unwrap();
    // the logistic fit diverges; the residual tolerance bounds the gap
    assert!((corx.first("theta").unwrap().estimate - 1.0).abs() < 1e-7);
    // the variance heads to zero; the mean coefficients are exact
    let corx = corx_estimator(&data, &spec(Family::Gaussian), &empirical(&data), &opts).unwrap();
    assert!(corx.converged && (corx.first("theta").unwrap().estimate - 1.0).abs() < 1e-8);
}

#[test]
fn cor_estimate_by_hand() {
    let rows = [
        (1.0, 0.0, Some(1), 1.0),
        (1.0, 0.0, Some(1), 1.0),
        (1.0, 0.0, Some(2), 0.0),
        (3.0, 0.0, Some(2), 1.0),
        (2.0, 0.0, None, 0.0),
    ];
    let est = cor_estimator(&dataset(&rows, 2), &EstimandSpec::Mean, &FitOptions::default()).unwrap();
    // last-call mean 3/4 imputed for the nonrespondent weight 2 of 8
    let oracle = (2.0 + 3.0 + 2.0 * 0.75) / 8.0;
    let d = est.first("theta").unwrap().estimate - oracle;
    assert!(d.abs() < 1e-8, "{d}");
}

#[test]
fn corx_reports_clipping() {
    let rows = random_rows(11, 200, &[None, Some(1), Some(2)]);
    let data = dataset(&rows, 2);
    // population law concentrated on x = 0 leaves no room for responders at ±1
    let dist = CovariateDistribution::new(names(&["x"]), vec![vec![-1.0], vec![0.0], vec![1.0]], vec![0.05, 0.9, 0.05])
        .unwrap();
    let law = nonrespondent_covariates(&data, &dist).unwrap();
    assert!(law.clipped > 0);
    assert!((law.dist.mass().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(law.dist.mass().iter().all(|m| *m >= 0.0));
}

fn forward_cells(theta: f64, a1: f64, a2: f64, gamma: f64) -> ([f64; 6], PcCells) {
    let (q10, q11) = (expit(a1), expit(a1 + gamma));
    let (q20, q21) = (expit(a2), expit(a2 + gamma));
    let p = [
        (1.0 - theta) * (1.0 - q10) * (1.0 - q20),
        theta * (1.0 - q11) * (1.0 - q21),
        (1.0 - theta) * (1.0 - q10) * q20,
        theta * (1.0 - q11) * q21,
        (1.0 - theta) * q10,
        theta * q11,
    ];
    (p, PcCells { p3: p[2], p4: p[3], p5: p[4], p6: p[5] })
}

#[test]
fn pc_examples() {
    let sol = pc_identify(PcCells { p3: 0.125, p4: 0.125, p5: 0.125, p6: 0.125 }).unwrap();
    assert!((sol.p[0] - 0.25).abs() < 1e-12 && (sol.p[1] - 0.25).abs() < 1e-12);
    assert!((sol.theta - 0.5).abs() < 1e-12);

    let (p, cells) = forward_cells(0.6, -0.4, 0.1, 0.8);
    let sol = pc_identify(cells).unwrap();
    for j in 0..6 {
        assert!((sol.p[j] - p[j]).abs() < 1e-10);
    }
    assert!((sol.theta - (p[1] + p[3] + p[5])).abs() < 1e-10);
}

#[test]
fn pc_estimator_matches_cell_solution() {
    let rows = random_rows(12, 400, &[None, Some(1), Some(2)]);
    let data = dataset(&rows, 2);
    let (sol, est) = pc_estimator(&data, &FitOptions::default()).unwrap();
    assert!(est.converged);
    assert!((est.first("theta").unwrap().estimate - sol.theta).abs() < 1e-8);
    assert!(est.first("theta").unwrap().se.unwrap() > 0.0);
    let cont: Vec<_> = rows.iter().map(|r| (r.0, r.1, r.2, 0.5)).collect();
    assert!(pc_cells(&dataset(&cont, 2)).is_err());
}

proptest! {
    #[test]
    fn pc_recovers_forward_laws(theta in 0.05f64..0.95, a1 in -2.0f64..1.0, a2 in -2.0f64..1.0, gamma in -2.0f64..2.0) {
        let (p, cells) = forward_cells(theta, a1, a2, gamma);
        let sol = pc_identify(cells).unwrap();
        for j in 0..6 {
            prop_assert!((sol.p[j] - p[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn pc_solution_satisfies_the_identity(p3 in 0.0f64..0.25, p4 in 0.0f64..0.25, p5 in 0.0f64..0.25, p6 in 0.0f64..0.25) {
        let sol = pc_identify(PcCells { p3, p4, p5, p6 }).unwrap();
        let p = sol.p;
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let lhs = p[5] * (p[0] + p[2]) * p[1] * p[2];
        let rhs = p[4] * (p[1] + p[3]) * p[3] * p[0];
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }
}

#[test]
fn multicall_with_certain_last_call_is_full_mean() {
    let rows = random_rows(13, 300, &[Some(1), Some(2), Some(3)]);
    let data = dataset(&rows, 3);
    let sp = spec(Family::Binary).with_standard_last_call();
    let s = build_multicall_ipw(&data, &sp, &empirical(&data)).unwrap();
    let mut base = vec![0.0; s.dim()];
    // π_3 within 3e-9 of one
    set(&s, &mut base, "alpha_k", &[20.0, 0.0]);
    let p = solve_free(&s, &["alpha_k", "gamma_k"], base);
    assert!((theta(&s, &p) - weighted_mean(&rows)).abs() < 1e-7);
}

#[test]
fn multicall_recovers_zero_last_call_odds() {
    let spec3 = ScenarioSpec::three_calls(Family::Binary, LastCall { alpha: [-0.5, 0.3, 0.2], gamma: 0.0 })
        .with_size(100_000, 1);
    let data = generate(&spec3, &mut substream(spec3.seed, &spec3.name, 0)).unwrap();
    let sp = ModelSpec::standard(data.missing_names(), Family::Binary).with_standard_last_call();
    let s = build_multicall_ipw(&data, &sp, &population(20).unwrap()).unwrap();
    let est = fit(&s, &FitOptions::default()).unwrap();
    assert!(est.converged);
    let gk = est.first("gamma_k").unwrap();
    assert!(gk.estimate.abs() < 3.0 * gk.se.unwrap(), "{} ± {}", gk.estimate, gk.se.unwrap());
    let th = est.first("theta").unwrap();
    assert!((th.estimate - true_mean(&spec3)).abs() < 4.0 * th.se.unwrap());
}

#[test]
fn moments_vanish_at_the_truth() {
    let sc = ScenarioSpec::named(Setting::TT, Family::Binary).with_size(100_000, 1);
    let data = generate(&sc, &mut substream(sc.seed, "moments-at-truth", 0)).unwrap();
    let sp = ModelSpec::standard(data.missing_names(), Family::Binary);
    let dist = population(20).unwrap();
    let truth = true_mean(&sc);
    for s in [build_ipw(&data, &sp, &dist), build_reg(&data, &sp, &dist), build_dr(&data, &sp, &dist)] {
        let s = s.unwrap();
        let mut p = vec![0.0; s.dim()];
        for (block, value) in
            [("alpha1", &sc.alpha1[..]), ("alpha2", &sc.alpha2[..]), ("beta", &sc.beta[..]), ("gamma", &[sc.gamma][..])]
        {
            if s.layout().range(block).is_some() {
                set(&s, &mut p, block, value);
            }
        }
        set(&s, &mut p, "theta", &[truth]);
        let g = s.residual(&p).unwrap();
        let b = s.meat(&p).unwrap();
        for j in 0..s.dim() {
            let se = b[(j, j)].sqrt();
            assert!(g[j].abs() < 4.0 * se, "{} row {j}: {} vs se {se}", s.name(), g[j]);
        }
    }
}

#[test]
fn impute_unsure_thresholds_fitted_probabilities() {
    let mut rows = Vec::new();
    for i in 0..200 {
        let x = (i % 5) as f64 - 2.0;
        let y = if x > 0.0 { (i % 7 != 0) as u8 as f64 } else { (i % 7 == 0) as u8 as f64 };
        rows.push((1.0, x, Some(1 + i % 2), y));
    }
    let data = dataset(&rows, 2);
    let unsure: Vec<bool> = (0..200).map(|i| i % 10 == 0 || i % 10 == 3).collect();
    let design = FeatureMap::intercept_and_linear(&names(&["x"]));
    let (out, report) = impute_unsure(&data, &unsure, &design, ImputeMode::Threshold).unwrap();
    assert_eq!(report.imputed.len(), unsure.iter().filter(|u| **u).count());
    for &(i, p, y) in &report.imputed {
        assert_eq!(y, (p >= 0.5) as u8 as f64);
        assert_eq!(y, (rows[i].1 > 0.0) as u8 as f64);
        assert_eq!(out.outcome(i), Some(y));
    }
    for i in (0..200).filter(|&i| !unsure[i]) {
        assert_eq!(out.outcome(i), data.outcome(i));
    }
    let (a, _) = impute_unsure(&data, &unsure, &design, ImputeMode::Stochastic { seed: 3 }).unwrap();
    let (b, _) = impute_unsure(&data, &unsure, &design, ImputeMode::Stochastic { seed: 3 }).unwrap();
    assert_eq!(a, b);
    assert!(impute_unsure(&data, &unsure[1..], &design, ImputeMode::Threshold).is_err());
}
