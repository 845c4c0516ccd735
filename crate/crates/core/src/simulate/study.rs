//! Monte Carlo replication of the simulation tables.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::equations::{mar_system, EquationSystem, ModelSpec, SorKind};
use crate::error::{Error, Result};
use crate::estimate::{build, fit, FitOptions};
use crate::model::{CovariateDistribution, SurveyDataset};
use crate::rng::{map_indexed_with_jobs, subseed, substream};
use crate::solver::SolveOptions;

use super::generate::{covariate_names, generate, population, true_mean, POPULATION_NODES};
use super::scenario::ScenarioSpec;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Largest tolerated share of failed replicates per estimator.
pub const MAX_FAILURE_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyEstimator {
    Sor(SorKind),
    /// The SOR system with `γ = 0`.
    Mar(SorKind),
    /// Uses every call of a three-call design.
    MultiCall(SorKind),
}

impl StudyEstimator {
    pub const PROPOSED: [StudyEstimator; 3] =
        [StudyEstimator::Sor(SorKind::Ipw), StudyEstimator::Sor(SorKind::Reg), StudyEstimator::Sor(SorKind::Dr)];
    pub const MAR: [StudyEstimator; 3] =
        [StudyEstimator::Mar(SorKind::Ipw), StudyEstimator::Mar(SorKind::Reg), StudyEstimator::Mar(SorKind::Dr)];

    pub fn name(self) -> String {
        match self {
            StudyEstimator::Sor(k) => k.name().to_string(),
            StudyEstimator::Mar(k) => format!("{}_mar", k.name()),
            StudyEstimator::MultiCall(k) => format!("{}_k", k.name()),
        }
    }

    pub fn table_columns() -> Vec<StudyEstimator> {
        Self::PROPOSED.iter().chain(&Self::MAR).copied().collect()
    }
}

impl std::str::FromStr for StudyEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (base, wrap): (&str, fn(SorKind) -> StudyEstimator) = if let Some(b) = s.strip_suffix("_mar") {
            (b, StudyEstimator::Mar)
        } else if let Some(b) = s.strip_suffix("_k") {
            (b, StudyEstimator::MultiCall)
        } else {
            (s.as_str(), StudyEstimator::Sor)
        };
        let kind = match base {
            "ipw" => SorKind::Ipw,
            "reg" => SorKind::Reg,
            "dr" => SorKind::Dr,
            _ => return Err(Error::Config(format!("unknown estimator `{s}`"))),
        };
        Ok(wrap(kind))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyOptions {
    pub estimators: Vec<StudyEstimator>,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
    pub population_nodes: usize,
    pub solve: SolveOptions,
    pub level: f64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            estimators: StudyEstimator::table_columns(),
            jobs: None,
            population_nodes: POPULATION_NODES,
            solve: SolveOptions::default(),
            level: 0.95,
        }
    }
}

/// One replicate × estimator × parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub scenario: String,
    pub rep: usize,
    pub estimator: String,
    pub parameter: String,
    pub truth: f64,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub covered: Option<bool>,
    pub converged: bool,
}

impl Record {
    fn usable(&self) -> bool {
        self.converged && self.estimate.is_some() && self.se.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub estimator: String,
    pub parameter: String,
    pub truth: f64,
    /// Replicates with an estimate and a standard error.
    pub replicates: usize,
    pub failed: usize,
    pub mean_bias: f64,
    pub median_bias: f64,
    pub mc_sd: f64,
    pub median_se: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub schema_version: u32,
    pub scenario: ScenarioSpec,
    pub truth_theta: f64,
    pub records: Vec<Record>,
    pub summaries: Vec<Summary>,
}

impl StudyReport {
    pub fn summary(&self, estimator: StudyEstimator, parameter: &str) -> Option<&Summary> {
        let name = estimator.name();
        self.summaries.iter().find(|s| s.estimator == name && s.parameter == parameter)
    }

    /// Estimates of one estimator and parameter in replicate order (failures skipped).
    pub fn estimates(&self, estimator: StudyEstimator, parameter: &str) -> Vec<f64> {
        let name = estimator.name();
        self.records
            .iter()
            .filter(|r| r.estimator == name && r.parameter == parameter && r.usable())
            .filter_map(|r| r.estimate)
            .collect()
    }

    /// Estimators whose failure share exceeds [`MAX_FAILURE_RATE`].
    pub fn excessive_failures(&self) -> Vec<String> {
        self.summaries
            .iter()
            .filter(|s| {
                let total = (s.replicates + s.failed) as f64;
                total > 0.0 && s.failed as f64 / total > MAX_FAILURE_RATE
            })
            .map(|s| format!("{}/{}: {} of {} replicates failed", s.estimator, s.parameter, s.failed, s.replicates + s.failed))
            .collect()
    }

    /// Errors when too many replicates failed.
    pub fn check(&self) -> Result<()> {
        let bad = self.excessive_failures();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Numeric(format!("{}: {}", self.scenario.name, bad.join("; "))))
        }
    }

    /// Flat CSV with one row per replicate × estimator × parameter.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Wide CSV with one row per replicate and, for every estimator and
    /// parameter, the estimate, standard error, interval and coverage flag.
    pub fn write_wide_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut keys: Vec<(String, String)> = Vec::new();
        for r in &self.records {
            let k = (r.estimator.clone(), r.parameter.clone());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["rep".to_string()];
        for (e, p) in &keys {
            for suffix in ["", "_se", "_lower", "_upper", "_covered", "_converged"] {
                header.push(format!("{e}_{p}{suffix}"));
            }
        }
        w.write_record(&header)?;
        let num = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let mut reps: Vec<usize> = self.records.iter().map(|r| r.rep).collect();
        reps.dedup();
        for rep in reps {
            let mut row = vec![rep.to_string()];
            for (e, p) in &keys {
                match self.records.iter().find(|r| r.rep == rep && &r.estimator == e && &r.parameter == p) {
                    Some(r) => {
                        row.push(num(r.estimate));
                        row.push(num(r.se));
                        row.push(num(r.lower));
                        row.push(num(r.upper));
                        row.push(r.covered.map_or(String::new(), |c| (c as u8).to_string()));
                        row.push((r.converged as u8).to_string());
                    }
                    None => row.extend(std::iter::repeat_n(String::new(), 6)),
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Coverage table with one row per parameter, one column per estimator.
    pub fn coverage_table(&self, estimators: &[StudyEstimator]) -> String {
        let mut s = format!("{:<10}", self.scenario.name);
        for e in estimators {
            s.push_str(&format!("{:>9}", e.name()));
        }
        s.push('\n');
        for p in ["theta", "gamma"] {
            let mut line = format!("{p:<10}");
            let mut any = false;
            for e in estimators {
                match self.summary(*e, p) {
                    Some(x) if x.replicates > 0 => {
                        any = true;
                        line.push_str(&format!("{:>9.3}", x.coverage));
                    }
                    _ => line.push_str(&format!("{:>9}", "-")),
                }
            }
            if any {
                s.push_str(&line);
                s.push('\n');
            }
        }
        s
    }
}

/// Working models of the simulations: intercept and linear terms everywhere,
/// `u = y`; the last call copies the second-call models.
pub fn working_model(spec: &ScenarioSpec) -> ModelSpec {
    let m = ModelSpec::standard(&covariate_names(), spec.family);
    if spec.last.is_some() {
        m.with_standard_last_call()
    } else {
        m
    }
}

fn system_for(
    est: StudyEstimator,
    data: &SurveyDataset,
    model: &ModelSpec,
    dist: &CovariateDistribution,
) -> Result<EquationSystem> {
    match est {
        StudyEstimator::Sor(k) => build(k, data, model, dist, 2),
        StudyEstimator::Mar(k) => mar_system(k, &data.collapse_calls(2)?, model, dist),
        StudyEstimator::MultiCall(k) => build(k, data, model, dist, data.calls()),
    }
}

/// Estimates every requested estimator on one generated replicate.
pub fn run_replicate(
    spec: &ScenarioSpec,
    rep: usize,
    truth_theta: f64,
    dist: &CovariateDistribution,
    opts: &StudyOptions,
) -> Result<Vec<Record>> {
    let mut rng = substream(spec.seed, &spec.name, rep as u64);
    let data = generate(spec, &mut rng)?;
    let model = working_model(spec);
    let fit_opts = FitOptions {
        solve: SolveOptions { seed: subseed(spec.seed, &spec.name, rep as u64), ..opts.solve },
        level: opts.level,
        ..FitOptions::default()
    };
    let mut out = Vec::new();
    for &est in &opts.estimators {
        let fitted = system_for(est, &data, &model, dist).and_then(|s| fit(&s, &fit_opts));
        let params: Vec<(&str, f64)> = match est {
            StudyEstimator::Mar(_) => vec![("theta", truth_theta)],
            _ => vec![("theta", truth_theta), ("gamma", spec.gamma)],
        };
        for (name, truth) in params {
            let mut r = Record {
                scenario: spec.name.clone(),
                rep,
                estimator: est.name(),
                parameter: name.to_string(),
                truth,
                estimate: None,
                se: None,
                lower: None,
                upper: None,
                covered: None,
                converged: false,
            };
            if let Ok(f) = &fitted {
                if let Some(p) = f.first(name) {
                    r.converged = f.converged;
                    r.estimate = Some(p.estimate);
                    r.se = p.se;
                    if let Some((lo, hi)) = p.ci {
                        r.lower = Some(lo);
                        r.upper = Some(hi);
                        r.covered = Some(lo <= truth && truth <= hi);
                    }
                }
            }
            out.push(r);
        }
    }
    Ok(out)
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn summarize(records: &[Record]) -> Vec<Summary> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in records {
        let k = (r.estimator.clone(), r.parameter.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(estimator, parameter)| {
            let rs: Vec<&Record> =
                records.iter().filter(|r| r.estimator == estimator && r.parameter == parameter).collect();
            let ok: Vec<&&Record> = rs.iter().filter(|r| r.usable()).collect();
            let truth = rs.first().map_or(f64::NAN, |r| r.truth);
            let mut bias: Vec<f64> = ok.iter().map(|r| r.estimate.unwrap() - truth).collect();
            let m = ok.len() as f64;
            let mean_bias = bias.iter().sum::<f64>() / m;
            let mc_sd = (bias.iter().map(|b| (b - mean_bias).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
            let mut se: Vec<f64> = ok.iter().map(|r| r.se.unwrap()).collect();
            let coverage = ok.iter().filter(|r| r.covered == Some(true)).count() as f64 / m;
            Summary {
                estimator,
                parameter,
                truth,
                replicates: ok.len(),
                failed: rs.len() - ok.len(),
                mean_bias,
                median_bias: median(&mut bias),
                mc_sd,
                median_se: median(&mut se),
                coverage,
            }
        })
        .collect()
}

/// Runs `spec.reps` replicates. Replicate `r` always draws from the stream
/// keyed by `(spec.seed, spec.name, r)`, so results do not depend on `jobs`.
pub fn run_study(spec: &ScenarioSpec, opts: &StudyOptions) -> Result<StudyReport> {
    spec.validate()?;
    let dist = population(opts.population_nodes)?;
    let truth_theta = true_mean(spec);
    let per_rep = map_indexed_with_jobs(spec.reps, opts.jobs, |rep| {
        run_replicate(spec, rep, truth_theta, &dist, opts)
    });
    let mut records = Vec::new();
    for r in per_rep {
        records.extend(r?);
    }
    let summaries = summarize(&records);
    Ok(StudyReport { schema_version: REPORT_SCHEMA_VERSION, scenario: spec.clone(), truth_theta, records, summaries })
}

/// Data generated with second-call odds ratio `γ + Δ`, analysed assuming
/// stableness of resistance, for every `Δ` in the grid.
pub fn run_sensitivity_study(
    grid: &[f64],
    base: &ScenarioSpec,
    opts: &StudyOptions,
) -> Result<Vec<StudyReport>> {
    if grid.is_empty() {
        return Err(Error::Config("empty sensitivity grid".into()));
    }
    grid.iter()
        .map(|&d| {
            let mut spec = base.clone();
            spec.delta = d;
            spec.name = format!("{}-delta{d:+}", base.name);
            run_study(&spec, opts)
        })
        .collect()
}
