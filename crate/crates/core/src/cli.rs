//! Command-line front end. Each subcommand writes one CSV (or JSON) file into
//! `--out DIR`, or to standard output when no directory is given.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{bayes, mle, BayesResult, MleResult};
use crate::experiments::{
    estimator_risk, histogram, limit_samples, power_curves, resolve_thresholds, ExperimentConfig,
    LimitStatistic, SampleSize,
};
use crate::io::{
    parse_config, parse_thresholds, parse_trajectories, write_histogram, write_limits,
    write_power, write_risk, write_thresholds, write_trajectories, CsvHeader,
};
use crate::model::{sample_observation_set, IntensityModel, ThetaDomain};
use crate::numerics::{component, RandomStream};
use crate::testing::{MonteCarloConfig, TestKind, ThresholdTable};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "cplab", version, about = "Poisson change-point laboratory")]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Flat `key = value` experiment config.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory; standard output when absent.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one observation set and write its trajectories.
    Simulate(SimulateArgs),
    /// MLE and Bayes estimates for a trajectory file.
    Estimate(EstimateArgs),
    /// Build the threshold table of the GLRT, WT, BT1 and BT2.
    Threshold(ThresholdArgs),
    /// Power curves at finite n or in the limit (`--n inf`).
    Power(PowerArgs),
    /// Sample a limit statistic, with a histogram.
    Limits(LimitsArgs),
    /// Scaled moments of the MLE and the Bayes estimator.
    Risk(RiskArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Number of trajectories (default: first entry of n_list).
    #[arg(long)]
    n: Option<usize>,
    /// Change point (default: theta of the config).
    #[arg(long)]
    theta: Option<f64>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Trajectory CSV produced by `simulate`.
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    /// Levels (default: epsilon_list of the config).
    #[arg(long, value_delimiter = ',')]
    eps: Vec<f64>,
    /// Simulated null paths for k and g (default: mc_paths of the config).
    #[arg(long)]
    paths: Option<usize>,
}

#[derive(Debug, Args)]
struct PowerArgs {
    #[arg(long, value_delimiter = ',', default_values = ["glrt", "wt", "bt1"])]
    test: Vec<TestKind>,
    /// Sample sizes; `inf` for the limiting experiment (default: n_list).
    #[arg(long, value_delimiter = ',')]
    n: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    eps: Vec<f64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Threshold table written by `threshold`; simulated when absent.
    #[arg(long, value_name = "FILE")]
    thresholds: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LimitsArgs {
    #[arg(long, value_enum, default_value = "xi-star")]
    stat: LimitStatistic,
    /// Number of draws (default: replicates of the config).
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = 60)]
    bins: usize,
}

#[derive(Debug, Args)]
struct RiskArgs {
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long)]
    reps: Option<usize>,
}

/// Runs the CLI and returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("cplab: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric { .. } => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => parse_config(&read(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(dir) = &cli.out {
        config.out_dir = Some(dir.clone());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let out = Output {
        dir: config.out_dir.clone(),
    };
    pool.install(|| match cli.command {
        Command::Simulate(a) => simulate(a, config, &out),
        Command::Estimate(a) => estimate(a, config, &out),
        Command::Threshold(a) => threshold(a, config, &out),
        Command::Power(a) => power(a, config, &out),
        Command::Limits(a) => limits(a, config, &out),
        Command::Risk(a) => risk(a, config, &out),
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

struct Output {
    dir: Option<PathBuf>,
}

impl Output {
    fn emit(&self, name: &str, text: &str) -> Result<()> {
        match &self.dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                let path = dir.join(name);
                fs::write(&path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
            }
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(text.as_bytes())?;
                Ok(())
            }
        }
    }
}

/// The model of the config at `n` trajectories, over the test interval.
fn config_model(config: &ExperimentConfig, n: usize, theta: f64) -> Result<IntensityModel> {
    let schedule = config.schedule()?;
    IntensityModel::new(
        config.baseline.clone(),
        schedule.jump_at(n),
        theta,
        config.tau,
        ThetaDomain::new(config.domain.0, config.domain.1)?,
    )
}

fn simulate(a: SimulateArgs, config: ExperimentConfig, out: &Output) -> Result<()> {
    let n = a.n.or(config.n_list.first().copied()).unwrap_or(100);
    let theta = a.theta.unwrap_or(config.theta);
    let model = config_model(&config, n, theta)?;
    let rng = RandomStream::new(config.seed, &[component::SAMPLE, n as u64]);
    let obs = sample_observation_set(&model, n, &rng)?;
    let header = CsvHeader::new(&config)
        .with("theta", theta)
        .with("jump", model.jump())
        .with("duplicate_repairs", obs.duplicate_repairs());
    out.emit("trajectories.csv", &write_trajectories(&obs, &header))
}

#[derive(Serialize)]
struct EstimateReport {
    n: usize,
    tau: f64,
    events: usize,
    mle: MleResult,
    bayes: BayesResult,
}

fn estimate(a: EstimateArgs, config: ExperimentConfig, out: &Output) -> Result<()> {
    let file = parse_trajectories(&read(&a.data)?)?;
    let obs = file.observations;
    if obs.tau() != config.tau {
        return Err(Error::Config(format!(
            "data horizon {} differs from config tau {}",
            obs.tau(),
            config.tau
        )));
    }
    let model = config_model(&config, obs.n(), config.theta)?;
    let report = EstimateReport {
        n: obs.n(),
        tau: obs.tau(),
        events: obs.total_events(),
        mle: mle(&obs, &model)?,
        bayes: bayes(&obs, &model, &config.prior)?,
    };
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    out.emit("estimate.json", &text)
}

fn threshold(a: ThresholdArgs, mut config: ExperimentConfig, out: &Output) -> Result<()> {
    if !a.eps.is_empty() {
        config.epsilon_list = a.eps;
    }
    if let Some(p) = a.paths {
        config.mc_paths = p;
    }
    let mc = MonteCarloConfig::new(config.mc_paths, config.path_config()?)?;
    let table = ThresholdTable::build(&config.epsilon_list, &mc, config.seed)?;
    let header = CsvHeader::new(&config)
        .with("limit_step", config.limit_step)
        .with("limit_radius", config.limit_radius);
    out.emit("thresholds.csv", &write_thresholds(&table, &header))
}

fn parse_sizes(values: &[String], config: &ExperimentConfig) -> Result<Vec<SampleSize>> {
    if values.is_empty() {
        return Ok(config.n_list.iter().map(|&n| SampleSize::Finite(n)).collect());
    }
    values
        .iter()
        .map(|v| match v.trim() {
            "inf" | "limit" => Ok(SampleSize::Limit),
            s => s
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .map(SampleSize::Finite)
                .ok_or_else(|| Error::Config(format!("invalid sample size '{s}'"))),
        })
        .collect()
}

fn power(a: PowerArgs, mut config: ExperimentConfig, out: &Output) -> Result<()> {
    if !a.eps.is_empty() {
        config.epsilon_list = a.eps;
    }
    if let Some(r) = a.reps {
        config.replicates = r;
    }
    let sizes = parse_sizes(&a.n, &config)?;
    config.validate()?;
    let table = match &a.thresholds {
        Some(path) => Some(parse_thresholds(&read(path)?)?),
        None => None,
    };
    let thresholds = resolve_thresholds(&a.test, &config, table.as_ref())?;
    let mut curves = Vec::new();
    for n in sizes {
        curves.extend(power_curves(&a.test, n, &config, &thresholds)?);
    }
    let header = CsvHeader::new(&config);
    out.emit("power.csv", &write_power(&curves, &header))
}

fn limits(a: LimitsArgs, config: ExperimentConfig, out: &Output) -> Result<()> {
    let cfg = config.path_config()?;
    let count = a.count.unwrap_or(config.replicates);
    if count == 0 || a.bins == 0 {
        return Err(Error::Config("count and bins must be positive".into()));
    }
    let values = limit_samples(a.stat, count, &cfg, config.seed);
    let name = a.stat.name();
    let header = CsvHeader::new(&config)
        .with("limit_step", cfg.step())
        .with("limit_radius", cfg.radius());
    out.emit(&format!("limits_{name}.csv"), &write_limits(name, &values, &header))?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min).floor();
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max).floor() + 1.0;
    let bins = histogram(&values, lo, hi, a.bins);
    let width = (hi - lo) / a.bins as f64;
    out.emit(&format!("limits_{name}_hist.csv"), &write_histogram(name, &bins, width, &header))
}

fn risk(a: RiskArgs, mut config: ExperimentConfig, out: &Output) -> Result<()> {
    if !a.n.is_empty() {
        config.n_list = a.n;
    }
    if let Some(r) = a.reps {
        config.replicates = r;
    }
    let rows = estimator_risk(&config.n_list, &config)?;
    out.emit("risk.csv", &write_risk(&rows, &CsvHeader::new(&config)))
}
