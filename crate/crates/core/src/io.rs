//! Text formats: the flat `key = value` experiment config, trajectory CSV files,
//! threshold tables, and the CSV outputs of every experiment.
//!
//! Every emitted CSV starts with `#` comment lines carrying the tool version,
//! the seed and a SHA-256 hash of the canonical config text.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::Prior;
use crate::experiments::{ExperimentConfig, PowerCurve, RiskRow};
use crate::model::{Baseline, ObservationSet, Trajectory};
use crate::testing::{ThresholdProvenance, ThresholdRow, ThresholdTable};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

const CONFIG_KEYS: &[&str] = &[
    "psi",
    "psi_table",
    "jump_scale",
    "jump_exponent",
    "theta",
    "tau",
    "domain_lo",
    "domain_hi",
    "risk_lo",
    "risk_hi",
    "n_list",
    "u_grid",
    "epsilon_list",
    "replicates",
    "seed",
    "limit_step",
    "limit_radius",
    "mc_paths",
    "npt_u1",
    "prior",
    "prior_table",
    "out_dir",
];

fn num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid value '{value}' for {key}")))
}

fn finite(line: usize, key: &str, value: &str) -> Result<f64> {
    let x: f64 = num(line, key, value)?;
    if !x.is_finite() {
        return Err(Error::parse(line, format!("{key} must be finite")));
    }
    Ok(x)
}

fn list<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>> {
    if value.trim().is_empty() {
        return Err(Error::parse(line, format!("{key} is empty")));
    }
    value.split(',').map(|v| num(line, key, v)).collect()
}

fn finite_list(line: usize, key: &str, value: &str) -> Result<Vec<f64>> {
    let xs: Vec<f64> = list(line, key, value)?;
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::parse(line, format!("{key} entries must be finite")));
    }
    Ok(xs)
}

/// `t:y, t:y, ...`
fn table(line: usize, key: &str, value: &str) -> Result<Vec<(f64, f64)>> {
    value
        .split(',')
        .map(|pair| {
            let (t, y) = pair
                .split_once(':')
                .ok_or_else(|| Error::parse(line, format!("{key} entries must look like t:value")))?;
            Ok((finite(line, key, t)?, finite(line, key, y)?))
        })
        .collect()
}

/// Parses the flat key-value config. Unknown or repeated keys are errors;
/// missing keys keep their defaults. The result is not yet validated.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut seen = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::parse(line, "expected 'key = value'"))?;
        let key = key.trim();
        let value = value.trim();
        if !CONFIG_KEYS.contains(&key) {
            return Err(Error::parse(line, format!("unknown key '{key}'")));
        }
        if let Some(first) = seen.insert(key.to_string(), line) {
            return Err(Error::parse(line, format!("'{key}' already set on line {first}")));
        }
        match key {
            "psi" => cfg.baseline = Baseline::Constant(finite(line, key, value)?),
            "psi_table" => cfg.baseline = Baseline::PiecewiseLinear(table(line, key, value)?),
            "jump_scale" => cfg.jump_scale = finite(line, key, value)?,
            "jump_exponent" => cfg.jump_exponent = finite(line, key, value)?,
            "theta" => cfg.theta = finite(line, key, value)?,
            "tau" => cfg.tau = finite(line, key, value)?,
            "domain_lo" => cfg.domain.0 = finite(line, key, value)?,
            "domain_hi" => cfg.domain.1 = finite(line, key, value)?,
            "risk_lo" => cfg.risk_domain.0 = finite(line, key, value)?,
            "risk_hi" => cfg.risk_domain.1 = finite(line, key, value)?,
            "n_list" => cfg.n_list = list(line, key, value)?,
            "u_grid" => cfg.u_grid = finite_list(line, key, value)?,
            "epsilon_list" => cfg.epsilon_list = finite_list(line, key, value)?,
            "replicates" => cfg.replicates = num(line, key, value)?,
            "seed" => cfg.seed = num(line, key, value)?,
            "limit_step" => cfg.limit_step = finite(line, key, value)?,
            "limit_radius" => cfg.limit_radius = finite(line, key, value)?,
            "mc_paths" => cfg.mc_paths = num(line, key, value)?,
            "npt_u1" => cfg.npt_u1 = finite(line, key, value)?,
            "prior" => match value {
                "uniform" => cfg.prior = Prior::Uniform,
                other => return Err(Error::parse(line, format!("unknown prior '{other}'"))),
            },
            "prior_table" => cfg.prior = Prior::PiecewiseLinear(table(line, key, value)?),
            "out_dir" => cfg.out_dir = Some(PathBuf::from(value)),
            _ => unreachable!("key list checked above"),
        }
    }
    for (a, b) in [("psi", "psi_table"), ("prior", "prior_table")] {
        if seen.contains_key(a) && seen.contains_key(b) {
            return Err(Error::parse(seen[b].max(seen[a]), format!("'{a}' and '{b}' are exclusive")));
        }
    }
    Ok(cfg)
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

fn join_table(pts: &[(f64, f64)]) -> String {
    pts.iter().map(|(t, y)| format!("{t}:{y}")).collect::<Vec<_>>().join(", ")
}

/// Canonical text of a config; `parse_config(&format_config(c)) == c`.
pub fn format_config(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    match &cfg.baseline {
        Baseline::Constant(c) => kv("psi", c.to_string()),
        Baseline::PiecewiseLinear(pts) => kv("psi_table", join_table(pts)),
    }
    kv("jump_scale", cfg.jump_scale.to_string());
    kv("jump_exponent", cfg.jump_exponent.to_string());
    kv("theta", cfg.theta.to_string());
    kv("tau", cfg.tau.to_string());
    kv("domain_lo", cfg.domain.0.to_string());
    kv("domain_hi", cfg.domain.1.to_string());
    kv("risk_lo", cfg.risk_domain.0.to_string());
    kv("risk_hi", cfg.risk_domain.1.to_string());
    kv("n_list", join(&cfg.n_list));
    kv("u_grid", join(&cfg.u_grid));
    kv("epsilon_list", join(&cfg.epsilon_list));
    kv("replicates", cfg.replicates.to_string());
    kv("seed", cfg.seed.to_string());
    kv("limit_step", cfg.limit_step.to_string());
    kv("limit_radius", cfg.limit_radius.to_string());
    kv("mc_paths", cfg.mc_paths.to_string());
    kv("npt_u1", cfg.npt_u1.to_string());
    match &cfg.prior {
        Prior::Uniform => kv("prior", "uniform".into()),
        Prior::PiecewiseLinear(pts) => kv("prior_table", join_table(pts)),
    }
    if let Some(dir) = &cfg.out_dir {
        kv("out_dir", dir.display().to_string());
    }
    s
}

/// SHA-256 of the canonical config text. The output directory is left out so
/// that identical runs written to different places carry the same hash.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut cfg = cfg.clone();
    cfg.out_dir = None;
    Sha256::digest(format_config(&cfg).as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Provenance comment block for emitted CSV files.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvHeader {
    pub seed: u64,
    pub config_hash: String,
    /// Further `key = value` lines, in order.
    pub extra: Vec<(String, String)>,
}

impl CsvHeader {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            seed: cfg.seed,
            config_hash: config_hash(cfg),
            extra: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.push((key.into(), value.to_string()));
        self
    }

    fn render(&self) -> String {
        let mut s = format!(
            "# tool = {TOOL_VERSION}\n# seed = {}\n# config_hash = {}\n",
            self.seed, self.config_hash
        );
        for (k, v) in &self.extra {
            let _ = writeln!(s, "# {k} = {v}");
        }
        s
    }
}

/// Leading `# key = value` lines of a CSV file.
fn read_comment_header(text: &str) -> Result<BTreeMap<String, String>> {
    let mut meta = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let Some(body) = raw.trim_start().strip_prefix('#') else {
            break;
        };
        if let Some((k, v)) = body.split_once('=') {
            if meta.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::parse(i + 1, format!("header key '{}' repeated", k.trim())));
            }
        }
    }
    Ok(meta)
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn check_columns(reader: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(csv_line(&e), e.to_string()))?
        .clone();
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::parse(
            csv_header_line(reader),
            format!("expected columns {}", expected.join(",")),
        ));
    }
    Ok(())
}

fn csv_line(e: &csv::Error) -> usize {
    e.position().map_or(0, |p| p.line() as usize)
}

fn csv_header_line(reader: &csv::Reader<&[u8]>) -> usize {
    reader.position().line() as usize
}

/// A trajectory file together with its header metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub observations: ObservationSet,
    /// Every `# key = value` header entry, including `tau` and `n`.
    pub meta: BTreeMap<String, String>,
}

/// Writes one observation set as `trajectory_index,event_time` rows. The
/// header records `tau` and `n` (trajectories without events have no rows).
pub fn write_trajectories(obs: &ObservationSet, header: &CsvHeader) -> String {
    let mut s = header.render();
    let _ = writeln!(s, "# tau = {}\n# n = {}", obs.tau(), obs.n());
    s.push_str("trajectory_index,event_time\n");
    for (j, tr) in obs.trajectories().iter().enumerate() {
        for t in tr.events() {
            let _ = writeln!(s, "{j},{t}");
        }
    }
    s
}

pub fn parse_trajectories(text: &str) -> Result<TrajectoryFile> {
    let meta = read_comment_header(text)?;
    let get = |k: &str| {
        meta.get(k)
            .ok_or_else(|| Error::parse(1, format!("header lacks '# {k} = ...'")))
    };
    let tau: f64 = get("tau")?
        .parse()
        .map_err(|_| Error::parse(1, "header tau is not a number"))?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::parse(1, format!("header tau = {tau} must be positive")));
    }
    let n: usize = get("n")?
        .parse()
        .map_err(|_| Error::parse(1, "header n is not a count"))?;
    if n == 0 || n > 10_000_000 {
        return Err(Error::parse(1, format!("header n = {n} out of range")));
    }
    let mut reader = csv_reader(text);
    check_columns(&mut reader, &["trajectory_index", "event_time"])?;
    let mut events: Vec<Vec<f64>> = vec![Vec::new(); n];
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::parse(csv_line(&e), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let j: usize = num(line, "trajectory_index", &rec[0])?;
        let t: f64 = num(line, "event_time", &rec[1])?;
        if j >= n {
            return Err(Error::parse(line, format!("trajectory_index {j} but n = {n}")));
        }
        if !(0.0..=tau).contains(&t) {
            return Err(Error::parse(line, format!("event_time {t} outside [0, {tau}]")));
        }
        events[j].push(t);
    }
    let trajectories = events
        .into_iter()
        .enumerate()
        .map(|(j, mut ev)| {
            ev.sort_by(f64::total_cmp);
            Trajectory::new(ev, tau).map_err(|_| {
                Error::parse(0, format!("trajectory {j} has repeated event times"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let observations = ObservationSet::new(trajectories, tau).map_err(|e| Error::parse(0, e.to_string()))?;
    Ok(TrajectoryFile { observations, meta })
}

const THRESHOLD_COLUMNS: [&str; 8] = [
    "epsilon", "h_glrt", "m_wt", "k_bt1", "g_bt2", "method", "mc_paths", "seed",
];

pub fn write_thresholds(table: &ThresholdTable, header: &CsvHeader) -> String {
    let mut s = header.render();
    s.push_str(&THRESHOLD_COLUMNS.join(","));
    s.push('\n');
    let p = table.provenance();
    for r in table.rows() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.epsilon, r.h, r.m, r.k, r.g, p.method, p.mc_paths, p.seed
        );
    }
    s
}

/// Reads a threshold table; all rows must share one provenance.
pub fn parse_thresholds(text: &str) -> Result<ThresholdTable> {
    read_comment_header(text)?;
    let mut reader = csv_reader(text);
    check_columns(&mut reader, &THRESHOLD_COLUMNS)?;
    let mut rows = Vec::new();
    let mut provenance: Option<ThresholdProvenance> = None;
    let mut last_line = 0;
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::parse(csv_line(&e), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        last_line = line;
        let f = |i: usize| finite(line, THRESHOLD_COLUMNS[i], &rec[i]);
        rows.push(ThresholdRow {
            epsilon: f(0)?,
            h: f(1)?,
            m: f(2)?,
            k: f(3)?,
            g: f(4)?,
            k_se: None,
            g_se: None,
        });
        let prov = ThresholdProvenance {
            method: rec[5].to_string(),
            mc_paths: num(line, "mc_paths", &rec[6])?,
            seed: num(line, "seed", &rec[7])?,
        };
        match &provenance {
            None => provenance = Some(prov),
            Some(p) if *p != prov => {
                return Err(Error::parse(line, "rows disagree on method, mc_paths or seed"));
            }
            Some(_) => {}
        }
    }
    let provenance = provenance.ok_or_else(|| Error::parse(last_line, "threshold table has no rows"))?;
    ThresholdTable::new(rows, provenance).map_err(|e| Error::parse(last_line, e.to_string()))
}

pub fn write_power(curves: &[PowerCurve], header: &CsvHeader) -> String {
    let mut s = header.render();
    s.push_str("test,n,u,power,se,reps\n");
    for c in curves {
        for i in 0..c.u.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                c.kind,
                c.n.label(),
                c.u[i],
                c.power[i],
                c.se[i],
                c.replicates
            );
        }
    }
    s
}

pub fn write_risk(rows: &[RiskRow], header: &CsvHeader) -> String {
    let mut s = header.render();
    s.push_str("n,estimator,p,scaled_moment,se\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.n,
            r.estimator.name(),
            r.p,
            r.scaled_moment,
            r.se
        );
    }
    s
}

pub fn write_limits(statistic: &str, values: &[f64], header: &CsvHeader) -> String {
    let mut s = header.render();
    s.push_str("statistic,value\n");
    for v in values {
        let _ = writeln!(s, "{statistic},{v}");
    }
    s
}

pub fn write_histogram(statistic: &str, bins: &[(f64, usize, f64)], width: f64, header: &CsvHeader) -> String {
    let mut s = header.render();
    s.push_str("statistic,bin_lo,bin_hi,count,density\n");
    for &(lo, count, density) in bins {
        let _ = writeln!(s, "{statistic},{lo},{},{count},{density}", lo + width);
    }
    s
}
