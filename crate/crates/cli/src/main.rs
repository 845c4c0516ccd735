use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sor::equations::ModelSpec;
use sor::estimate::{estimate, Estimate, FitOptions, Method};
use sor::io::{
    parse_estimand, population_distribution, read_census_path, read_survey_path, DataSummary, EstimateReport,
    Manifest, SensitivityPoint, SensitivityReport, REPORT_SCHEMA_VERSION,
};
use sor::model::{CovariateDistribution, SurveyDataset};
use sor::simulate::{run_study, ScenarioSpec, Setting, StudyEstimator, StudyOptions, DEFAULT_SEED};
use sor::Error;

const EXIT_INPUT: u8 = 2;
const EXIT_NO_CONVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(name = "sor", version, about = "Stableness-of-resistance estimation for surveys with callbacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a population mean or regression coefficients from a survey file.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo study for one simulation scenario.
    Simulate(SimulateArgs),
    /// Re-estimate over a grid of offsets Δ between the call-1 and call-2 odds ratios.
    Sensitivity(SensitivityArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Survey CSV with weight, r1..rK, y and covariate columns.
    #[arg(long)]
    data: PathBuf,
    /// Census CSV with covariate columns and a `mass` or `count` column.
    #[arg(long)]
    census: Option<PathBuf>,
    /// TOML manifest naming column roles and working models.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// `mean` or `logit:<col>,<col>,…`; overrides the manifest.
    #[arg(long)]
    estimand: Option<String>,
    /// Number of calls analysed (later callbacks are merged into nonresponse).
    #[arg(long, default_value_t = 2)]
    calls: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Bootstrap resamples reported next to the sandwich standard errors.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: DataArgs,
    /// ipw, reg, dr, cc, mar (or mar-reg, mar-dr), cor, corx or pc.
    #[arg(long)]
    method: Method,
    /// Fixed offset Δ added to the second-call odds ratio.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    delta: f64,
}

#[derive(Args)]
struct SensitivityArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long, default_value = "dr")]
    method: Method,
    /// Comma-separated values of Δ.
    #[arg(long, allow_hyphen_values = true, default_value = "-0.5,-0.2,-0.1,0,0.1,0.2,0.5")]
    grid: String,
}

#[derive(Args)]
struct SimulateArgs {
    /// TT, FT, TF or FF.
    #[arg(long)]
    scenario: String,
    /// binary or continuous.
    #[arg(long, default_value = "binary")]
    family: String,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Comma-separated estimators (ipw, reg, dr, ipw_mar, reg_mar, dr_mar).
    #[arg(long, value_delimiter = ',')]
    estimators: Vec<StudyEstimator>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Data { .. } | Error::Invalid(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => {
                EXIT_INPUT
            }
            _ => EXIT_NO_CONVERGENCE,
        };
        Failure { code, message: e.to_string() }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_INPUT, message: message.into() }
}

struct Loaded {
    data: SurveyDataset,
    dist: Option<CovariateDistribution>,
    spec: ModelSpec,
    opts: FitOptions,
}

fn seed_or_default(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        eprintln!("seed: {DEFAULT_SEED} (default)");
        DEFAULT_SEED
    })
}

fn load(args: &DataArgs) -> Result<Loaded, Failure> {
    let manifest = match &args.manifest {
        Some(p) => Manifest::from_path(p)?,
        None => Manifest::default(),
    };
    let data = read_survey_path(&args.data, &manifest).map_err(|e| with_path(e, &args.data))?;
    let dist = match &args.census {
        Some(p) => {
            let census = read_census_path(p).map_err(|e| with_path(e, p))?;
            Some(population_distribution(&census, &data, manifest.design_weighting)?)
        }
        None => None,
    };
    let names = data.covariate_names();
    let mut spec = manifest.model_spec(&names)?;
    if let Some(e) = &args.estimand {
        spec.estimand = parse_estimand(e, &names)?;
    }
    if args.calls < 2 || args.calls > data.calls() {
        return Err(input_error(format!("--calls must be between 2 and {}", data.calls())));
    }
    let seed = seed_or_default(args.seed);
    let mut opts = FitOptions { calls: args.calls, bootstrap: args.bootstrap, seed, ..FitOptions::default() };
    opts.solve.seed = seed;
    Ok(Loaded { data, dist, spec, opts })
}

fn with_path(e: Error, path: &Path) -> Failure {
    let mut f = Failure::from(e);
    f.message = format!("{}: {}", path.display(), f.message);
    f
}

fn needs_census(method: Method) -> bool {
    !matches!(method, Method::Cc | Method::Cor | Method::Pc)
}

fn population(loaded: &Loaded, method: Method) -> Result<CovariateDistribution, Failure> {
    match &loaded.dist {
        Some(d) => Ok(d.clone()),
        None if needs_census(method) => Err(input_error(format!("method {method} needs --census"))),
        // unused by these methods
        None => Ok(CovariateDistribution::point_mass(vec![], vec![])?),
    }
}

fn print_estimate(est: &Estimate) {
    println!("method {}  converged {}  iterations {}  |g| {:.3e}", est.method, est.converged, est.iterations, est.residual_norm);
    println!("{:<10} {:<16} {:>12} {:>12} {:>12} {:>12}", "block", "label", "estimate", "se", "lower", "upper");
    let cell = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
    for p in &est.parameters {
        println!(
            "{:<10} {:<16} {:>12} {:>12} {:>12} {:>12}",
            p.block,
            p.label,
            format!("{:.6}", p.estimate),
            cell(p.se),
            cell(p.ci.map(|c| c.0)),
            cell(p.ci.map(|c| c.1))
        );
    }
    for r in &est.propensity {
        println!("call {} propensity range [{:.4}, {:.4}]", r.call, r.min, r.max);
    }
    if let Some(e) = &est.covariance_error {
        println!("covariance unavailable: {e}");
    }
    for n in &est.notes {
        println!("note: {n}");
    }
}

fn write_out(path: &Option<PathBuf>, json: String) -> Result<(), Failure> {
    if let Some(p) = path {
        fs::write(p, json).map_err(|e| with_path(e.into(), p))?;
    }
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), Failure> {
    let loaded = load(&args.input)?;
    let dist = population(&loaded, args.method)?;
    let spec = loaded.spec.clone().with_delta(args.delta);
    let est = estimate(args.method, &loaded.data, &dist, &spec, &loaded.opts)?;
    print_estimate(&est);
    let converged = est.converged;
    let report = EstimateReport {
        schema_version: REPORT_SCHEMA_VERSION,
        seed: loaded.opts.seed,
        delta: args.delta,
        data: DataSummary::of(&loaded.data),
        estimate: est,
    };
    write_out(&args.input.out, report.to_json()?)?;
    if converged {
        Ok(())
    } else {
        Err(Failure { code: EXIT_NO_CONVERGENCE, message: "solver did not converge".into() })
    }
}

fn parse_grid(text: &str) -> Result<Vec<f64>, Failure> {
    let grid = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| input_error(format!("bad --grid value `{s}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    if grid.is_empty() {
        return Err(input_error("empty --grid"));
    }
    Ok(grid)
}

fn cmd_sensitivity(args: SensitivityArgs) -> Result<(), Failure> {
    let grid = parse_grid(&args.grid)?;
    if !matches!(args.method, Method::Ipw | Method::Reg | Method::Dr) {
        return Err(input_error("sensitivity analysis needs method ipw, reg or dr"));
    }
    let loaded = load(&args.input)?;
    let dist = population(&loaded, args.method)?;
    let mut points = Vec::with_capacity(grid.len());
    let mut all_converged = true;
    for &delta in &grid {
        let spec = loaded.spec.clone().with_delta(delta);
        let point = match estimate(args.method, &loaded.data, &dist, &spec, &loaded.opts) {
            Ok(est) => {
                println!("delta {delta:+}");
                print_estimate(&est);
                all_converged &= est.converged;
                SensitivityPoint { delta, estimate: Some(est), error: None }
            }
            Err(e) => {
                println!("delta {delta:+}: {e}");
                all_converged = false;
                SensitivityPoint { delta, estimate: None, error: Some(e.to_string()) }
            }
        };
        points.push(point);
    }
    let report = SensitivityReport {
        schema_version: REPORT_SCHEMA_VERSION,
        method: args.method.name(),
        seed: loaded.opts.seed,
        data: DataSummary::of(&loaded.data),
        points,
    };
    write_out(&args.input.out, report.to_json()?)?;
    if all_converged {
        Ok(())
    } else {
        Err(Failure { code: EXIT_NO_CONVERGENCE, message: "some grid points did not converge".into() })
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let setting: Setting = args.scenario.parse()?;
    let family = args.family.parse()?;
    let spec = ScenarioSpec::named(setting, family).with_size(args.n, args.reps).with_seed(seed_or_default(args.seed));
    let mut opts = StudyOptions { jobs: args.jobs, ..StudyOptions::default() };
    if !args.estimators.is_empty() {
        opts.estimators = args.estimators;
    }
    let report = run_study(&spec, &opts)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| with_path(e.into(), &args.out_dir))?;
    let json = args.out_dir.join(format!("{}.json", spec.name));
    let csv = args.out_dir.join(format!("{}.csv", spec.name));
    fs::write(&json, report.to_json()?).map_err(|e| with_path(e.into(), &json))?;
    let wide = args.out_dir.join(format!("{}_wide.csv", spec.name));
    let file = fs::File::create(&csv).map_err(|e| with_path(e.into(), &csv))?;
    report.write_csv(file)?;
    let file = fs::File::create(&wide).map_err(|e| with_path(e.into(), &wide))?;
    report.write_wide_csv(file)?;
    println!("truth {:.6}", report.truth_theta);
    print!("{}", report.coverage_table(&opts.estimators));
    for s in &report.summaries {
        if s.failed > 0 {
            println!("{}/{}: {} failed replicates", s.estimator, s.parameter, s.failed);
        }
    }
    report.check()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sensitivity(a) => cmd_sensitivity(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
