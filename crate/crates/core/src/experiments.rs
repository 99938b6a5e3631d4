//! Reproducible experiments: power curves at finite `n` and in the limit,
//! estimator risk, and samples of the limit statistics.
//!
//! Every replicate draws from a stream addressed by `(seed, component, n,
//! replicate)`, replicates run in parallel, and results are aggregated in
//! replicate order, so outputs do not depend on the number of threads. Power
//! curves reuse one stream per replicate across the `u` grid.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{bayes, mle, Prior};
use crate::limits::{
    positive_side, sample_xi_plus, sample_xi_zeta_star, sample_zeta_plus, LimitPathConfig,
};
use crate::model::{sample_observation_set, Baseline, IntensityModel, JumpSchedule, ThetaDomain};
use crate::numerics::{component, RandomStream};
use crate::testing::{
    glrt_threshold, limit_decision, npt_threshold, test_statistics, wt_threshold, MonteCarloConfig,
    TestKind, ThresholdTable,
};

/// Marker used in stream addresses for the limiting experiment.
const LIMIT_N: u64 = u64::MAX;

/// Everything an experiment needs, mirrored one-to-one by the key-value config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub baseline: Baseline,
    pub jump_scale: f64,
    pub jump_exponent: f64,
    /// `θ₁` for the tests, and the true `θ` of the risk experiment.
    pub theta: f64,
    pub tau: f64,
    /// Parameter interval of the tests; `θ₁` is normally its lower end.
    pub domain: (f64, f64),
    /// Parameter interval of the risk experiment; must contain `θ` inside.
    pub risk_domain: (f64, f64),
    pub n_list: Vec<usize>,
    pub u_grid: Vec<f64>,
    pub epsilon_list: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub limit_step: f64,
    pub limit_radius: f64,
    pub mc_paths: usize,
    pub npt_u1: f64,
    pub prior: Prior,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            baseline: Baseline::Constant(1.5),
            jump_scale: 1.0,
            jump_exponent: 0.25,
            theta: 2.0,
            tau: 4.0,
            domain: (2.0, 4.0),
            risk_domain: (1.0, 3.0),
            n_list: vec![100, 300],
            u_grid: (0..=20).map(f64::from).collect(),
            epsilon_list: vec![0.05],
            replicates: 1000,
            seed: 1,
            limit_step: 0.005,
            limit_radius: 128.0,
            mc_paths: 100_000,
            npt_u1: 4.0,
            prior: Prior::Uniform,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub const MIN_REPLICATES: usize = 100;

    pub fn validate(&self) -> Result<()> {
        if self.replicates < Self::MIN_REPLICATES {
            return Err(Error::Config(format!(
                "replicates = {} is below the minimum of {}",
                self.replicates,
                Self::MIN_REPLICATES
            )));
        }
        if self.u_grid.iter().any(|u| !(*u >= 0.0 && u.is_finite())) {
            return Err(Error::Config("u grid must be finite and nonnegative".into()));
        }
        if self.epsilon_list.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(Error::Config("every epsilon must lie in (0, 1)".into()));
        }
        if self.n_list.contains(&0) {
            return Err(Error::Config("n values must be positive".into()));
        }
        let schedule = self.schedule()?;
        if schedule.exponent() == 0.0 {
            return Err(Error::Config(
                "experiments cover vanishing jumps only; set jump_exponent in (0, 0.5)".into(),
            ));
        }
        self.path_config()?;
        for n in self.n_list.iter().copied().chain([1]) {
            self.test_model(n, self.theta)?;
            self.risk_model(n)?;
        }
        if !(self.npt_u1 > 0.0) {
            return Err(Error::Config(format!("npt_u1 = {} must be positive", self.npt_u1)));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<JumpSchedule> {
        JumpSchedule::new(self.jump_scale, self.jump_exponent).map_err(to_config)
    }

    pub fn path_config(&self) -> Result<LimitPathConfig> {
        LimitPathConfig::new(self.limit_step, self.limit_radius)
    }

    fn test_model(&self, n: usize, theta: f64) -> Result<IntensityModel> {
        let domain = ThetaDomain::new(self.domain.0, self.domain.1).map_err(to_config)?;
        IntensityModel::new(
            self.baseline.clone(),
            self.schedule()?.jump_at(n),
            theta,
            self.tau,
            domain,
        )
        .map_err(to_config)
    }

    fn risk_model(&self, n: usize) -> Result<IntensityModel> {
        let (lo, hi) = self.risk_domain;
        if !(lo < self.theta && self.theta < hi) {
            return Err(Error::Config(format!(
                "risk interval ({lo}, {hi}) must contain theta = {} in its interior",
                self.theta
            )));
        }
        IntensityModel::new(
            self.baseline.clone(),
            self.schedule()?.jump_at(n),
            self.theta,
            self.tau,
            ThetaDomain::new(lo, hi).map_err(to_config)?,
        )
        .map_err(to_config)
    }

    /// `φ*_n = ψ(θ₁)/(n r_n²)`.
    pub fn phi_star(&self, n: usize) -> Result<f64> {
        let r = self.schedule()?.jump_at(n);
        Ok(self.baseline.value(self.theta) / (n as f64 * r * r))
    }
}

fn to_config(e: Error) -> Error {
    match e {
        Error::Domain(m) | Error::ModelInvalid(m) => Error::Config(m),
        other => other,
    }
}

/// Sample size of a power curve: finite, or the limiting experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SampleSize {
    Finite(usize),
    Limit,
}

impl SampleSize {
    pub fn label(self) -> String {
        match self {
            SampleSize::Finite(n) => n.to_string(),
            SampleSize::Limit => "inf".into(),
        }
    }

    fn stream_tag(self) -> u64 {
        match self {
            SampleSize::Finite(n) => n as u64,
            SampleSize::Limit => LIMIT_N,
        }
    }
}

/// Estimated power `β(u)` on a grid of local alternatives.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerCurve {
    pub kind: TestKind,
    pub epsilon: f64,
    pub n: SampleSize,
    pub u: Vec<f64>,
    pub power: Vec<f64>,
    /// Binomial standard errors `sqrt(p(1−p)/M)`.
    pub se: Vec<f64>,
    pub replicates: usize,
    /// `θ₁ + u φ*_n` lies beyond the parameter interval, so the data carry no
    /// jump after the alternative has been clamped to its upper end.
    pub saturated: Vec<bool>,
}

/// Thresholds keyed by `(test, ε)`, on each statistic's natural scale.
pub type ThresholdMap = BTreeMap<(TestKind, u64), f64>;

fn eps_key(epsilon: f64) -> u64 {
    epsilon.to_bits()
}

/// Resolves thresholds for every `(kind, ε)`: from `table` when given,
/// otherwise in closed form (GLRT, NPT), by quadrature (WT) or by simulation
/// (BT1, BT2; seeded from `config.seed`).
pub fn resolve_thresholds(
    kinds: &[TestKind],
    config: &ExperimentConfig,
    table: Option<&ThresholdTable>,
) -> Result<ThresholdMap> {
    let mut out = ThresholdMap::new();
    let needs_mc = kinds.iter().any(|k| matches!(k, TestKind::Bt1 | TestKind::Bt2));
    let simulated = match (table, needs_mc) {
        (None, true) => {
            let mc = MonteCarloConfig::new(config.mc_paths, config.path_config()?)?;
            Some(ThresholdTable::build(&config.epsilon_list, &mc, config.seed)?)
        }
        _ => None,
    };
    for &eps in &config.epsilon_list {
        for &kind in kinds {
            let value = match (kind, table.or(simulated.as_ref())) {
                (TestKind::Npt, _) => npt_threshold(eps, config.npt_u1)?,
                (k, Some(t)) => t.threshold(k, eps)?,
                (TestKind::Glrt, None) => glrt_threshold(eps)?,
                (TestKind::Wt, None) => wt_threshold(eps)?,
                (k, None) => unreachable!("{k} thresholds are simulated above"),
            };
            out.insert((kind, eps_key(eps)), value);
        }
    }
    Ok(out)
}

fn threshold_of(map: &ThresholdMap, kind: TestKind, eps: f64) -> Result<f64> {
    map.get(&(kind, eps_key(eps)))
        .copied()
        .ok_or_else(|| Error::Config(format!("no {kind} threshold for epsilon = {eps}")))
}

fn aggregate(
    kinds: &[TestKind],
    config: &ExperimentConfig,
    n: SampleSize,
    saturated: &[bool],
    rejections: &[Vec<bool>],
) -> Vec<PowerCurve> {
    // rejections[replicate][(kind, eps, u)] in row-major order.
    let (nk, ne, nu) = (kinds.len(), config.epsilon_list.len(), config.u_grid.len());
    let m = rejections.len() as f64;
    let mut curves = Vec::with_capacity(nk * ne);
    for (ki, &kind) in kinds.iter().enumerate() {
        for (ei, &epsilon) in config.epsilon_list.iter().enumerate() {
            let mut power = Vec::with_capacity(nu);
            let mut se = Vec::with_capacity(nu);
            for ui in 0..nu {
                let idx = (ki * ne + ei) * nu + ui;
                let hits = rejections.iter().filter(|r| r[idx]).count() as f64;
                let p = hits / m;
                power.push(p);
                se.push((p * (1.0 - p) / m).sqrt());
            }
            curves.push(PowerCurve {
                kind,
                epsilon,
                n,
                u: config.u_grid.clone(),
                power,
                se,
                replicates: rejections.len(),
                saturated: saturated.to_vec(),
            });
        }
    }
    curves
}

/// Power curves of several tests at once; the same simulated data serve every
/// test, level and (for finite `n`) every `u` up to the alternative's location.
pub fn power_curves(
    kinds: &[TestKind],
    n: SampleSize,
    config: &ExperimentConfig,
    thresholds: &ThresholdMap,
) -> Result<Vec<PowerCurve>> {
    config.validate()?;
    let mut levels = Vec::new();
    for &kind in kinds {
        for &eps in &config.epsilon_list {
            levels.push((kind, threshold_of(thresholds, kind, eps)?));
        }
    }
    let root = RandomStream::new(config.seed, &[component::POWER, n.stream_tag()]);
    match n {
        SampleSize::Finite(n) => finite_power(kinds, n, config, &levels, &root),
        SampleSize::Limit => limit_power(kinds, config, &levels, &root),
    }
}

/// One test's power curve.
pub fn power_curve(
    kind: TestKind,
    n: SampleSize,
    config: &ExperimentConfig,
    thresholds: &ThresholdMap,
) -> Result<Vec<PowerCurve>> {
    power_curves(&[kind], n, config, thresholds)
}

fn finite_power(
    kinds: &[TestKind],
    n: usize,
    config: &ExperimentConfig,
    levels: &[(TestKind, f64)],
    root: &RandomStream,
) -> Result<Vec<PowerCurve>> {
    let phi_star = config.phi_star(n)?;
    let hi = config.domain.1;
    let analysis = config.test_model(n, config.theta)?;
    let nu = config.u_grid.len();
    let mut data_models = Vec::with_capacity(nu);
    let mut saturated = Vec::with_capacity(nu);
    for &u in &config.u_grid {
        let theta_u = config.theta + u * phi_star;
        saturated.push(theta_u > hi);
        data_models.push(config.test_model(n, theta_u.min(hi))?);
    }
    let npt_u1 = kinds.contains(&TestKind::Npt).then_some(config.npt_u1);
    let rejections: Vec<Vec<bool>> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|j| -> Result<Vec<bool>> {
            let stream = root.child(j);
            let mut stats = Vec::with_capacity(nu);
            for model in &data_models {
                let obs = sample_observation_set(model, n, &stream)?;
                stats.push(test_statistics(&obs, &analysis, config.theta, &config.prior, npt_u1)?);
            }
            let mut out = Vec::with_capacity(levels.len() * nu);
            for &(kind, threshold) in levels {
                for s in &stats {
                    out.push(s.decide(kind, threshold)?.rejects());
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(aggregate(kinds, config, SampleSize::Finite(n), &saturated, &rejections))
}

fn limit_power(
    kinds: &[TestKind],
    config: &ExperimentConfig,
    levels: &[(TestKind, f64)],
    root: &RandomStream,
) -> Result<Vec<PowerCurve>> {
    let cfg = config.path_config()?;
    let u1 = config.npt_u1;
    let nu = config.u_grid.len();
    let rejections: Vec<Vec<bool>> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|j| -> Result<Vec<bool>> {
            let stream = root.child(j);
            let w_u1: f64 = u1.sqrt() * stream.child(LIMIT_N).sample::<f64, _>(StandardNormal);
            let mut stats = Vec::with_capacity(nu);
            for &u in &config.u_grid {
                let s = positive_side(u, &cfg, &mut stream.clone())?;
                let log_npt = w_u1 - 0.5 * (u1 - u).abs() + 0.5 * u;
                stats.push((s, log_npt));
            }
            let mut out = Vec::with_capacity(levels.len() * nu);
            for &(kind, threshold) in levels {
                for (s, log_npt) in &stats {
                    out.push(limit_decision(kind, s, Some(*log_npt), threshold)?.rejects());
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(aggregate(kinds, config, SampleSize::Limit, &vec![false; nu], &rejections))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Mle,
    Bayes,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Mle => "mle",
            EstimatorKind::Bayes => "bayes",
        }
    }
}

/// One row of the risk table: `E[φ_n^{-p} |θ_est − θ|^p]` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskRow {
    pub n: usize,
    pub estimator: EstimatorKind,
    pub p: u32,
    pub scaled_moment: f64,
    pub se: f64,
}

/// Scaled errors `φ_n^{-1}(θ̂ − θ)` and `φ_n^{-1}(θ̃ − θ)` over the replicates,
/// with `φ_n = 1/(n r_n²)`.
pub fn scaled_errors(n: usize, config: &ExperimentConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    config.validate()?;
    let model = config.risk_model(n)?;
    let r = model.jump();
    let inv_phi = n as f64 * r * r;
    let root = RandomStream::new(config.seed, &[component::RISK, n as u64]);
    let pairs: Vec<(f64, f64)> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|j| -> Result<(f64, f64)> {
            let obs = sample_observation_set(&model, n, &root.child(j))?;
            let a = mle(&obs, &model)?.theta_hat;
            let b = bayes(&obs, &model, &config.prior)?.theta_tilde;
            Ok(((a - config.theta) * inv_phi, (b - config.theta) * inv_phi))
        })
        .collect::<Result<_>>()?;
    Ok(pairs.into_iter().unzip())
}

fn moment_row(n: usize, estimator: EstimatorKind, p: u32, errors: &[f64]) -> RiskRow {
    let xs: Vec<f64> = errors.iter().map(|e| e.abs().powi(p as i32)).collect();
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    RiskRow {
        n,
        estimator,
        p,
        scaled_moment: mean,
        se: (var / m).sqrt(),
    }
}

/// Scaled first and second absolute moments of both estimators for each `n`.
pub fn estimator_risk(n_list: &[usize], config: &ExperimentConfig) -> Result<Vec<RiskRow>> {
    let mut rows = Vec::new();
    for &n in n_list {
        let (mles, bayes) = scaled_errors(n, config)?;
        for (kind, errs) in [(EstimatorKind::Mle, &mles), (EstimatorKind::Bayes, &bayes)] {
            for p in [1, 2] {
                rows.push(moment_row(n, kind, p, errs));
            }
        }
    }
    Ok(rows)
}

/// Limit statistics that can be sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LimitStatistic {
    XiStar,
    ZetaStar,
    XiPlus,
    ZetaPlus,
}

impl LimitStatistic {
    pub fn name(self) -> &'static str {
        match self {
            LimitStatistic::XiStar => "xi_star",
            LimitStatistic::ZetaStar => "zeta_star",
            LimitStatistic::XiPlus => "xi_plus",
            LimitStatistic::ZetaPlus => "zeta_plus",
        }
    }
}

/// `count` independent draws of `statistic`; draw `i` uses stream
/// `(seed, LIMITS, statistic, i)`.
pub fn limit_samples(
    statistic: LimitStatistic,
    count: usize,
    cfg: &LimitPathConfig,
    seed: u64,
) -> Vec<f64> {
    let root = RandomStream::new(seed, &[component::LIMITS, statistic as u64]);
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = root.child(i);
            match statistic {
                LimitStatistic::XiStar => sample_xi_zeta_star(cfg, &mut r).0,
                LimitStatistic::ZetaStar => sample_xi_zeta_star(cfg, &mut r).1,
                LimitStatistic::XiPlus => sample_xi_plus(0.0, cfg, &mut r).expect("zero shift"),
                LimitStatistic::ZetaPlus => sample_zeta_plus(0.0, cfg, &mut r).expect("zero shift"),
            }
        })
        .collect()
}

/// Equal-width histogram on `[lo, hi)`: `(left edge, count, density)` per bin.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<(f64, usize, f64)> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v >= lo && v < hi {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
    }
    let total = values.len() as f64;
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| (lo + b as f64 * width, c, c as f64 / (total * width)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            n_list: vec![100],
            u_grid: vec![0.0, 5.0, 13.0, 14.0, 18.0],
            replicates: 400,
            limit_step: 0.01,
            limit_radius: 64.0,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = |f: fn(&mut ExperimentConfig)| {
            let mut c = ExperimentConfig::default();
            f(&mut c);
            matches!(c.validate(), Err(Error::Config(_)))
        };
        assert!(bad(|c| c.replicates = 99));
        assert!(bad(|c| c.u_grid = vec![-1.0]));
        assert!(bad(|c| c.epsilon_list = vec![1.5]));
        assert!(bad(|c| c.jump_exponent = 0.0));
        assert!(bad(|c| c.jump_exponent = 0.6));
        assert!(bad(|c| c.risk_domain = (2.0, 3.0)));
        assert!(bad(|c| c.limit_step = 0.05));
        assert!(bad(|c| c.baseline = Baseline::Constant(-1.0)));
    }

    #[test]
    fn saturation_beyond_the_horizon() {
        let cfg = small();
        let th = resolve_thresholds(&[TestKind::Glrt, TestKind::Wt], &cfg, None).unwrap();
        let curves = power_curves(&[TestKind::Glrt, TestKind::Wt], SampleSize::Finite(100), &cfg, &th).unwrap();
        for c in &curves {
            assert_eq!(c.saturated, vec![false, false, false, true, true]);
            assert_eq!(c.power[3], c.power[4]);
            // Size at the null.
            assert!((c.power[0] - 0.05).abs() < 3.0 * (0.05f64 * 0.95 / 400.0).sqrt() + 0.02);
            assert!(c.power[2] > c.power[0]);
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let cfg = small();
        let th = resolve_thresholds(&[TestKind::Glrt], &cfg, None).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| power_curves(&[TestKind::Glrt], SampleSize::Finite(100), &cfg, &th).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn limit_power_starts_at_size() {
        let cfg = ExperimentConfig {
            u_grid: vec![0.0, 9.0],
            replicates: 4000,
            ..small()
        };
        let th = resolve_thresholds(&[TestKind::Glrt, TestKind::Npt], &cfg, None).unwrap();
        let curves = power_curves(&[TestKind::Glrt, TestKind::Npt], SampleSize::Limit, &cfg, &th).unwrap();
        for c in &curves {
            assert!((c.power[0] - 0.05).abs() < 3.0 * c.se[0] + 0.01, "{} {}", c.kind, c.power[0]);
            assert!(c.power[1] > c.power[0] + 0.2);
        }
    }

    #[test]
    fn risk_rows() {
        let cfg = ExperimentConfig {
            replicates: 200,
            ..ExperimentConfig::default()
        };
        let rows = estimator_risk(&[100], &cfg).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.scaled_moment > 0.0 && r.se > 0.0));
    }

    #[test]
    fn histogram_integrates_to_inside_fraction() {
        let xs = [0.5, 1.5, 1.6, 2.5, 10.0];
        let h = histogram(&xs, 0.0, 3.0, 3);
        assert_eq!(h.iter().map(|b| b.1).collect::<Vec<_>>(), vec![1, 2, 1]);
        let mass: f64 = h.iter().map(|b| b.2 * 1.0).sum();
        assert!((mass - 0.8).abs() < 1e-12);
    }
}
