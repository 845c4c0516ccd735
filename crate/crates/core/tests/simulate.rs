use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use sor::math::expit;
use sor::model::Family;
use sor::rng::substream;
use sor::simulate::*;

/// `(E Y, P(R_1 = 1), P(R_2 = 1))` by Richardson-extrapolated midpoint rules
/// in `x` and Simpson in `y`, with the full law obtained by undoing the
/// second-call tilt of `f_2`.
fn oracle(spec: &ScenarioSpec) -> (f64, f64, f64) {
    let (a, b) = (midpoint(spec, 60), midpoint(spec, 120));
    let r = |c: f64, f: f64| (4.0 * f - c) / 3.0;
    (r(a.0, b.0), r(a.1, b.1), r(a.2, b.2))
}

fn midpoint(spec: &ScenarioSpec, m: usize) -> (f64, f64, f64) {
    let (mut ey, mut r1, mut r2) = (0.0, 0.0, 0.0);
    for i in 0..m {
        for j in 0..m {
            let xa = -1.0 + (i as f64 + 0.5) * 2.0 / m as f64;
            let xb = -1.0 + (j as f64 + 0.5) * 2.0 / m as f64;
            let design = |d: Design| match d {
                Design::Linear => [1.0, xa, xb],
                Design::Squared => [1.0, xa * xa, xb * xb],
            };
            let dot = |a: &[f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            let a1 = dot(&spec.alpha1, [1.0, xa, xb]);
            let a2 = dot(&spec.alpha2, design(spec.w1));
            let eta = dot(&spec.beta, design(spec.w2));
            let p1 = |y: f64| expit(a1 + spec.gamma * y);
            let p2 = |y: f64| expit(a2 + (spec.gamma + spec.delta) * y);
            let full = |y: f64, f2: f64| f2 / ((1.0 - p1(y)) * p2(y));
            // (support point, unnormalised mass) pairs
            let points: Vec<(f64, f64)> = match spec.family {
                Family::Binary => vec![(0.0, full(0.0, 1.0 - expit(eta))), (1.0, full(1.0, expit(eta)))],
                Family::Gaussian => {
                    let sd = spec.sigma2.sqrt();
                    let (lo, hi, k) = (eta - 14.0 * sd, eta + 14.0 * sd, 600);
                    let h = (hi - lo) / k as f64;
                    (0..=k)
                        .map(|t| {
                            let y = lo + t as f64 * h;
                            let w = if t == 0 || t == k { 1.0 } else if t % 2 == 1 { 4.0 } else { 2.0 };
                            let dens = (-(y - eta).powi(2) / (2.0 * spec.sigma2)).exp();
                            (y, w * full(y, dens))
                        })
                        .collect()
                }
            };
            let total: f64 = points.iter().map(|p| p.1).sum();
            let cell = 1.0 / (m * m) as f64;
            for (y, w) in points {
                let q = w / total * cell;
                ey += q * y;
                r1 += q * p1(y);
                r2 += q * (p1(y) + (1.0 - p1(y)) * p2(y));
            }
        }
    }
    (ey, r1, r2)
}

fn named() -> Vec<ScenarioSpec> {
    let mut v = Vec::new();
    for fam in [Family::Binary, Family::Gaussian] {
        for s in Setting::ALL {
            v.push(ScenarioSpec::named(s, fam));
        }
    }
    v
}

#[test]
fn named_scenarios_match_the_tables() {
    let b = |s| ScenarioSpec::named(s, Family::Binary);
    let c = |s| ScenarioSpec::named(s, Family::Gaussian);
    let rows = [
        (b(Setting::TT), [-1.0, 0.5, 0.2], [-0.5, 0.5, 0.2], [-0.5, 0.5, 0.5], 1.0),
        (b(Setting::FT), [-0.2, -0.5, 0.7], [-0.6, 1.7, 1.0], [1.2, 0.5, 0.5], -0.9),
        (b(Setting::TF), [-1.0, 0.5, 0.2], [-0.5, 0.5, 0.2], [-0.5, 5.0, -2.0], 1.3),
        (b(Setting::FF), [-0.3, 0.5, 0.2], [-0.5, -1.5, 0.2], [-1.0, 5.0, 0.5], 1.5),
        (c(Setting::TT), [0.0, 0.6, 0.5], [1.4, -0.5, 0.2], [0.6, 1.0, 0.3], 0.13),
        (c(Setting::FT), [-0.35, -0.5, 0.7], [-0.5, 1.8, 1.0], [-0.8, 5.0, 3.5], 0.12),
        (c(Setting::TF), [-1.0, 1.0, -0.1], [0.5, 1.0, -0.1], [-0.5, 5.0, -1.0], 0.5),
        (c(Setting::FF), [-0.3, -0.5, 1.0], [-0.4, 0.8, 0.0], [-1.5, 4.0, 3.0], 0.25),
    ];
    for (s, a1, a2, beta, gamma) in rows {
        assert_eq!((s.alpha1, s.alpha2, s.beta, s.gamma), (a1, a2, beta, gamma), "{}", s.name);
        assert_eq!((s.n, s.reps, s.delta), (5000, 1000, 0.0));
    }
    let sig: Vec<f64> = Setting::ALL.iter().map(|&s| c(s).sigma2).collect();
    assert_eq!(sig, [3.0, 2.0, 0.4, 0.25]);
    use Design::*;
    let designs: Vec<_> = Setting::ALL.iter().map(|s| (b(*s).w1, b(*s).w2)).collect();
    assert_eq!(designs, [(Linear, Linear), (Squared, Linear), (Linear, Squared), (Squared, Squared)]);
    let s = ScenarioSpec::sensitivity(0.2);
    let tt = b(Setting::TT);
    assert_eq!((s.alpha1, s.alpha2, s.beta), (tt.alpha1, tt.alpha2, tt.beta));
    assert_eq!((s.gamma, s.delta, s.w1, s.w2), (0.5, 0.2, Linear, Linear));
}

#[test]
fn truth_and_rates_match_the_oracle() {
    let n = 400_000;
    for spec in named() {
        let (ey, r1, r2) = oracle(&spec);
        assert!((true_mean(&spec) - ey).abs() < 1e-8, "{}: {} vs {ey}", spec.name, true_mean(&spec));
        let mut rng = substream(99, &spec.name, 0);
        let (mut sy, mut sy2, mut c1, mut c2) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let (_, _, y, first) = draw_unit(&spec, &mut rng);
            sy += y;
            sy2 += y * y;
            c1 += (first == Some(1)) as u8 as f64;
            c2 += first.is_some() as u8 as f64;
        }
        let nf = n as f64;
        let mean = sy / nf;
        let se_y = ((sy2 / nf - mean * mean) / nf).sqrt();
        assert!((mean - ey).abs() < 3.0 * se_y, "{} mean {mean} vs {ey}", spec.name);
        for (count, p) in [(c1, r1), (c2, r2)] {
            let se = (p * (1.0 - p) / nf).sqrt();
            assert!((count / nf - p).abs() < 3.0 * se, "{} rate {} vs {p}", spec.name, count / nf);
        }
    }
}

#[test]
fn null_response_model_rates() {
    let mut spec = ScenarioSpec::named(Setting::TT, Family::Binary).with_size(100_000, 1);
    spec.alpha1 = [0.0; 3];
    spec.alpha2 = [0.0; 3];
    spec.gamma = 0.0;
    let data = generate_binary(&spec, &mut substream(1, "null-rates", 0)).unwrap();
    let n = data.len() as f64;
    let r1 = (0..data.len()).filter(|&i| data.responded_by(i, 1)).count() as f64 / n;
    let r2 = (0..data.len()).filter(|&i| data.responded_by(i, 2)).count() as f64 / n;
    assert!((r1 - 0.5).abs() < 3.0 * (0.25 / n).sqrt());
    assert!((r2 - 0.75).abs() < 3.0 * (0.1875 / n).sqrt());
}

#[test]
fn nonrespondents_are_masked() {
    let spec = ScenarioSpec::named(Setting::TT, Family::Binary).with_size(2000, 1);
    let data = generate(&spec, &mut substream(5, "mask", 0)).unwrap();
    let mut replay = substream(5, "mask", 0);
    for i in 0..data.len() {
        let (xa, xb, y, first) = draw_unit(&spec, &mut replay);
        assert_eq!(data.first_response(i), first);
        match first {
            Some(_) => {
                assert_eq!(data.outcome(i), Some(y));
                assert_eq!(data.covariates(i), Some(vec![xa, xb]));
            }
            None => {
                assert_eq!(data.outcome(i), None);
                assert_eq!(data.covariates(i), None);
            }
        }
        assert_eq!(data.weight(i), 1.0);
    }
    assert!(generate_continuous(&spec, &mut replay).is_err());
}

#[test]
fn no_tilt_leaves_the_gaussian_law_unchanged() {
    let mut spec = ScenarioSpec::named(Setting::TT, Family::Gaussian);
    spec.gamma = 0.0;
    for (xa, xb) in [(0.3, -0.7), (-1.0, 1.0)] {
        let eta = spec.beta[0] + spec.beta[1] * xa + spec.beta[2] * xb;
        match full_law(&spec, xa, xb) {
            FullLaw::Mixture { components, var } => {
                assert_eq!(var, spec.sigma2);
                assert!(components.iter().all(|c| (c.1 - eta).abs() < 1e-12));
                assert!((components.iter().map(|c| c.0).sum::<f64>() - 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }
}

/// Two-sided one-sample KS p-value by the asymptotic Kolmogorov series.
fn ks_pvalue(mut z: Vec<f64>) -> f64 {
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let d = z
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let f = normal.cdf(*v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let p: f64 = (1..=100).map(|k| 2.0 * (-1f64).powi(k - 1) * (-2.0 * (k * k) as f64 * lambda * lambda).exp()).sum();
    p.clamp(0.0, 1.0)
}

#[test]
fn second_call_respondents_follow_the_stated_law() {
    let spec = ScenarioSpec::named(Setting::TT, Family::Gaussian).with_size(100_000, 1);
    let data = generate_continuous(&spec, &mut substream(17, "regeneration", 0)).unwrap();
    let sd = spec.sigma2.sqrt();
    let z: Vec<f64> = (0..data.len())
        .filter(|&i| data.first_response(i) == Some(2))
        .map(|i| {
            let x = data.covariates(i).unwrap();
            (data.outcome(i).unwrap() - (spec.beta[0] + spec.beta[1] * x[0] + spec.beta[2] * x[1])) / sd
        })
        .collect();
    assert!(z.len() > 5000);
    let p = ks_pvalue(z);
    assert!(p > 0.01, "KS p-value {p}");

    let spec = ScenarioSpec::named(Setting::TF, Family::Binary).with_size(100_000, 1);
    let data = generate_binary(&spec, &mut substream(17, "regeneration", 1)).unwrap();
    let resid: Vec<f64> = (0..data.len())
        .filter(|&i| data.first_response(i) == Some(2))
        .map(|i| {
            let x = data.covariates(i).unwrap();
            let eta = spec.beta[0] + spec.beta[1] * x[0] * x[0] + spec.beta[2] * x[1] * x[1];
            data.outcome(i).unwrap() - expit(eta)
        })
        .collect();
    let m = resid.iter().sum::<f64>() / resid.len() as f64;
    let se = (resid.iter().map(|r| (r - m).powi(2)).sum::<f64>() / resid.len() as f64 / resid.len() as f64).sqrt();
    assert!(m.abs() < 3.0 * se, "{m} ± {se}");
}

#[test]
fn ks_helper_rejects_a_shifted_sample() {
    let mut rng = substream(2, "ks", 0);
    let z: Vec<f64> = (0..5000).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    assert!(ks_pvalue(z) < 1e-6);
}

#[test]
fn choice_model_odds_ratios() {
    let mar = ChoiceParams { beta: [0.2, 0.35, 0.0], gamma1: 0.0, gamma2: 0.0, ..Default::default() };
    let s = generate_choice_model(&mar, 40_000, &mut substream(4, "choice", 0));
    let (g1, g2) = s.odds_ratios().unwrap();
    assert!(g1.abs() < 0.1 && g2.abs() < 0.1, "{g1} {g2}");
    assert_eq!(s.dataset().unwrap().len(), 40_000);

    let diffs = |p: ChoiceParams| -> f64 {
        let d: Vec<f64> = (0..200)
            .map(|r| {
                let s = generate_choice_model(&p, 1000, &mut substream(4, "choice-reps", r));
                let (a, b) = s.odds_ratios().unwrap();
                b - a
            })
            .collect();
        d.iter().sum::<f64>() / d.len() as f64
    };
    let base = ChoiceParams::default();
    assert_eq!((base.beta, base.alpha1, base.alpha2, base.gamma1, base.gamma2), ([0.2, 0.35, 0.3], [-0.6, 0.4], [0.35, -0.3], 0.3, 0.3));
    assert!(diffs(base).abs() < 0.05);
    assert!(diffs(ChoiceParams { gamma2: 0.8, ..base }) > 0.1);
}

fn small_study(jobs: Option<usize>, reps: usize) -> StudyReport {
    let spec = ScenarioSpec::named(Setting::TT, Family::Binary).with_size(1500, reps);
    let opts = StudyOptions { jobs, ..Default::default() };
    run_study(&spec, &opts).unwrap()
}

#[test]
fn study_is_independent_of_worker_count() {
    let a = small_study(Some(1), 3);
    let b = small_study(Some(3), 3);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.write_csv(&mut ca).unwrap();
    b.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn study_outputs() {
    let report = small_study(None, 1);
    assert_eq!(report.schema_version, REPORT_SCHEMA_VERSION);
    // θ for all six columns and γ for the three proposed ones
    assert_eq!(report.records.len(), 9);
    assert!(report.check().is_ok());

    let mut wide = Vec::new();
    report.write_wide_csv(&mut wide).unwrap();
    let text = String::from_utf8(wide).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("rep,ipw_theta,ipw_theta_se"));

    let mut flat = Vec::new();
    report.write_csv(&mut flat).unwrap();
    let back: Vec<Record> = csv::Reader::from_reader(flat.as_slice()).deserialize().collect::<Result<_, _>>().unwrap();
    assert_eq!(back, report.records);

    let json: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
    assert_eq!(json["truth_theta"].as_f64().unwrap(), report.truth_theta);
    let table = report.coverage_table(&StudyEstimator::table_columns());
    assert!(table.lines().count() == 3 && table.contains("ipw_mar"));
}

#[test]
fn failures_above_one_percent_fail_the_study() {
    let record = |rep: usize, ok: bool| Record {
        scenario: "x".into(),
        rep,
        estimator: "dr".into(),
        parameter: "theta".into(),
        truth: 0.5,
        estimate: ok.then_some(0.5),
        se: ok.then_some(0.01),
        lower: ok.then_some(0.48),
        upper: ok.then_some(0.52),
        covered: ok.then_some(true),
        converged: ok,
    };
    let report = |failed: usize| {
        let records: Vec<Record> = (0..200).map(|r| record(r, r >= failed)).collect();
        StudyReport {
            schema_version: REPORT_SCHEMA_VERSION,
            scenario: ScenarioSpec::named(Setting::TT, Family::Binary),
            truth_theta: 0.5,
            summaries: summarize(&records),
            records,
        }
    };
    let ok = report(2);
    assert_eq!(ok.summaries[0].failed, 2);
    assert_eq!(ok.summaries[0].replicates, 198);
    assert!(ok.check().is_ok());
    assert!(report(3).check().is_err());
}

#[test]
fn sensitivity_grid() {
    let base = ScenarioSpec::sensitivity(0.0).with_size(1000, 1);
    let opts = StudyOptions { estimators: vec![StudyEstimator::Sor(sor::equations::SorKind::Dr)], ..Default::default() };
    assert!(run_sensitivity_study(&[], &base, &opts).is_err());
    let reports = run_sensitivity_study(&[-0.1, 0.2], &base, &opts).unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[1].scenario.delta, 0.2);
    assert!(reports[1].scenario.name.ends_with("delta+0.2"));
    assert!(reports[0].truth_theta != reports[1].truth_theta);
}

#[test]
fn estimator_names_parse() {
    for e in StudyEstimator::table_columns() {
        assert_eq!(e.name().parse::<StudyEstimator>().unwrap(), e);
    }
    assert!("ipw_x".parse::<StudyEstimator>().is_err());
    assert!("tt".parse::<Setting>().is_ok() && "XX".parse::<Setting>().is_err());
}
