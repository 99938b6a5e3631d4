//! One-sided tests of `H₁: θ = θ₁` against `H₂: θ > θ₁` for a vanishing jump:
//! the generalized likelihood ratio test (GLRT), the Wald test (WT) built on the
//! MLE, two Bayesian tests (BT1 on the posterior mean, BT2 on the integrated
//! likelihood ratio) and the Neyman–Pearson test (NPT) against a fixed local
//! alternative, with their asymptotic thresholds.
//!
//! All statistics are computed over the one-sided parameter interval
//! `[θ₁, hi]`, where `hi` is the upper end of the model's interval, and are
//! rescaled by `φ*_n = ψ(θ₁)/(n r²)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{bayes_on_curve, mle_on_curve, Prior, PriorDensity};
use crate::likelihood::LogLikelihoodCurve;
use crate::limits::{positive_side, xi_plus_density, xi_plus_tail_bound, LimitPathConfig, PositiveSideStats};
use crate::model::{IntensityModel, ObservationSet, ThetaDomain};
use crate::numerics::{find_root, integrate, normal_quantile, normal_sf, RandomStream, UpperLimit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Glrt,
    Wt,
    Bt1,
    Bt2,
    Npt,
}

impl TestKind {
    pub const ALL: [TestKind; 5] = [TestKind::Glrt, TestKind::Wt, TestKind::Bt1, TestKind::Bt2, TestKind::Npt];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::Glrt => "glrt",
            TestKind::Wt => "wt",
            TestKind::Bt1 => "bt1",
            TestKind::Bt2 => "bt2",
            TestKind::Npt => "npt",
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown test kind '{s}'")))
    }
}

/// A test of asymptotic size `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSpec {
    pub kind: TestKind,
    pub epsilon: f64,
    /// Local alternative of the Neyman–Pearson test.
    pub u1: Option<f64>,
    pub theta1: f64,
    pub prior: Prior,
}

impl TestSpec {
    pub fn new(kind: TestKind, epsilon: f64, theta1: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if !theta1.is_finite() {
            return Err(Error::domain(format!("theta1 = {theta1}")));
        }
        if kind == TestKind::Npt {
            return Err(Error::Config("the Neyman-Pearson test needs u1; use TestSpec::npt".into()));
        }
        Ok(Self {
            kind,
            epsilon,
            u1: None,
            theta1,
            prior: Prior::Uniform,
        })
    }

    pub fn npt(epsilon: f64, theta1: f64, u1: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        check_u1(u1)?;
        Ok(Self {
            kind: TestKind::Npt,
            epsilon,
            u1: Some(u1),
            theta1,
            prior: Prior::Uniform,
        })
    }

    pub fn with_prior(mut self, prior: Prior) -> Self {
        self.prior = prior;
        self
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::domain(format!("size epsilon = {epsilon} must lie in (0, 1)")));
    }
    Ok(())
}

fn check_u1(u1: f64) -> Result<()> {
    if !(u1 > 0.0 && u1.is_finite()) {
        return Err(Error::domain(format!("local alternative u1 = {u1} must be positive")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Decision {
    #[serde(rename = "accept_h1")]
    AcceptNull,
    #[serde(rename = "accept_h2")]
    Reject,
}

impl Decision {
    fn from_rejection(reject: bool) -> Self {
        if reject {
            Decision::Reject
        } else {
            Decision::AcceptNull
        }
    }

    pub fn rejects(self) -> bool {
        self == Decision::Reject
    }
}

/// `h_ε = 1/ε`.
pub fn glrt_threshold(epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    Ok(1.0 / epsilon)
}

/// `∫_m^∞ f(t) dt` for the density of `ξ₊*`.
pub fn xi_plus_tail(m: f64) -> Result<f64> {
    if !(m >= 0.0) {
        return Err(Error::domain(format!("tail start {m} must be nonnegative")));
    }
    let cutoff = m + 200.0;
    integrate(
        |t| xi_plus_density(t).unwrap_or(0.0),
        m,
        UpperLimit::Infinite {
            cutoff,
            tail_bound: xi_plus_tail_bound(cutoff),
        },
        1e-9,
    )
}

/// `m_ε` solving `∫_{m_ε}^∞ f(t) dt = ε`.
pub fn wt_threshold(epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    let mut hi = 8.0;
    while xi_plus_tail(hi)? > epsilon {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::Numeric {
                message: format!("no bracket for the Wald threshold at epsilon = {epsilon}"),
                best: hi,
            });
        }
    }
    let mut failure = None;
    let root = find_root(
        |m| match xi_plus_tail(m) {
            Ok(v) => v - epsilon,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        0.0,
        hi,
        1e-9,
    );
    match failure {
        Some(e) => Err(e),
        None => root,
    }
}

/// `g_ε = −2/ln(1−ε)`, using `∫_0^∞ e^{W(v)−v/2} dv ≗ 2/E` with `E ~ Exp(1)`.
pub fn bt2_threshold_closed_form(epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    Ok(-2.0 / (-epsilon).ln_1p())
}

/// `d_ε = exp(z_ε √u₁ − u₁/2)` with `z_ε` the `(1−ε)`-quantile; no randomization.
pub fn npt_threshold(epsilon: f64, u1: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    check_u1(u1)?;
    let z = normal_quantile(1.0 - epsilon)?;
    Ok((z * u1.sqrt() - 0.5 * u1).exp())
}

/// Limiting Neyman–Pearson envelope `1 − Φ(z_ε − √u)`.
pub fn np_envelope(epsilon: f64, u: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    if !(u >= 0.0) {
        return Err(Error::domain(format!("u = {u} must be nonnegative")));
    }
    let z = normal_quantile(1.0 - epsilon)?;
    Ok(normal_sf(z - u.sqrt()))
}

/// Monte Carlo settings for simulated thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloConfig {
    pub paths: usize,
    pub path: LimitPathConfig,
    pub bootstrap: usize,
}

impl MonteCarloConfig {
    pub const MIN_PATHS: usize = 100_000;

    pub fn new(paths: usize, path: LimitPathConfig) -> Result<Self> {
        if paths < Self::MIN_PATHS {
            return Err(Error::Config(format!(
                "{paths} Monte Carlo paths; at least {} are required",
                Self::MIN_PATHS
            )));
        }
        Ok(Self {
            paths,
            path,
            bootstrap: 200,
        })
    }
}

/// A simulated quantile and its bootstrap standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub se: f64,
}

/// Null-hypothesis positive half-paths, path `i` drawn from `rng.child(i)`.
fn null_half_paths(mc: &MonteCarloConfig, rng: &RandomStream) -> Vec<PositiveSideStats> {
    (0..mc.paths as u64)
        .into_par_iter()
        .map(|i| positive_side(0.0, &mc.path, &mut rng.child(i)).expect("zero shift is valid"))
        .collect()
}

/// Interpolated empirical quantile (type 7) of sorted data.
fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let j = h.floor() as usize;
    let frac = h - j as f64;
    if j + 1 < sorted.len() {
        sorted[j] + frac * (sorted[j + 1] - sorted[j])
    } else {
        sorted[j]
    }
}

/// Upper `ε` quantiles of `values` with bootstrap standard errors.
///
/// A bootstrap resample is represented by multiplicities over the sorted
/// sample, so every level is read off one cumulative pass.
fn upper_quantiles(mut values: Vec<f64>, epsilons: &[f64], resamples: usize, rng: &RandomStream) -> Vec<McEstimate> {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let levels: Vec<f64> = epsilons.iter().map(|e| 1.0 - e).collect();
    let point: Vec<f64> = levels.iter().map(|&p| sorted_quantile(&values, p)).collect();
    let boots: Vec<Vec<f64>> = (0..resamples as u64)
        .into_par_iter()
        .map(|b| {
            let mut r = rng.child(b);
            let mut counts = vec![0u32; n];
            for _ in 0..n {
                counts[r.gen_range(0..n)] += 1;
            }
            // Ranks (0-based) of the two order statistics each level needs.
            let mut wanted: Vec<(usize, usize, usize)> = Vec::new();
            for (li, &p) in levels.iter().enumerate() {
                let j = ((n - 1) as f64 * p).floor() as usize;
                wanted.push((j, li, 0));
                wanted.push(((j + 1).min(n - 1), li, 1));
            }
            wanted.sort();
            let mut lows = vec![[0.0; 2]; levels.len()];
            let mut cum = 0usize;
            let mut w = 0;
            for (i, &c) in counts.iter().enumerate() {
                cum += c as usize;
                while w < wanted.len() && wanted[w].0 < cum {
                    lows[wanted[w].1][wanted[w].2] = values[i];
                    w += 1;
                }
            }
            levels
                .iter()
                .zip(&lows)
                .map(|(&p, pair)| {
                    let h = (n - 1) as f64 * p;
                    pair[0] + (h - h.floor()) * (pair[1] - pair[0])
                })
                .collect()
        })
        .collect();
    point
        .iter()
        .enumerate()
        .map(|(li, &value)| {
            let se = if resamples > 1 {
                let m = boots.iter().map(|b| b[li]).sum::<f64>() / resamples as f64;
                let v = boots.iter().map(|b| (b[li] - m).powi(2)).sum::<f64>() / (resamples - 1) as f64;
                v.sqrt()
            } else {
                f64::NAN
            };
            McEstimate { value, se }
        })
        .collect()
}

/// `k_ε` with `P(ζ₊* > k_ε) = ε`, from `mc.paths` simulated null half-paths.
pub fn bt1_threshold(epsilon: f64, mc: &MonteCarloConfig, rng: &RandomStream) -> Result<McEstimate> {
    check_epsilon(epsilon)?;
    let zetas = null_half_paths(mc, &rng.child(0)).iter().map(|s| s.zeta).collect();
    Ok(upper_quantiles(zetas, &[epsilon], mc.bootstrap, &rng.child(1))[0])
}

/// `g_ε` with `P(∫_0^∞ Z*(v) dv > g_ε) = ε`, simulated.
pub fn bt2_threshold(epsilon: f64, mc: &MonteCarloConfig, rng: &RandomStream) -> Result<McEstimate> {
    check_epsilon(epsilon)?;
    let ints = null_half_paths(mc, &rng.child(0))
        .iter()
        .map(|s| s.log_integral.exp())
        .collect();
    Ok(upper_quantiles(ints, &[epsilon], mc.bootstrap, &rng.child(1))[0])
}

/// Thresholds of all four tabulated families at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub epsilon: f64,
    pub h: f64,
    pub m: f64,
    pub k: f64,
    pub g: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_se: Option<f64>,
}

/// How the entries of a [`ThresholdTable`] were obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdProvenance {
    /// E.g. `h=closed-form;m=quadrature;k=monte-carlo;g=monte-carlo`.
    pub method: String,
    pub mc_paths: usize,
    pub seed: u64,
}

/// Thresholds `h_ε, m_ε, k_ε, g_ε` on a grid of levels, sorted by `ε`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdTable {
    rows: Vec<ThresholdRow>,
    provenance: ThresholdProvenance,
}

pub const DEFAULT_METHOD: &str = "h=closed-form;m=quadrature;k=monte-carlo;g=monte-carlo";

impl ThresholdTable {
    /// Validates `h = 1/ε` and strict monotonicity of every column in `ε`.
    pub fn new(mut rows: Vec<ThresholdRow>, provenance: ThresholdProvenance) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Config("threshold table has no rows".into()));
        }
        rows.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
        for r in &rows {
            check_epsilon(r.epsilon)?;
            if r.h != 1.0 / r.epsilon {
                return Err(Error::Config(format!(
                    "h = {} at epsilon = {} is not 1/epsilon",
                    r.h, r.epsilon
                )));
            }
        }
        for w in rows.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a.epsilon == b.epsilon {
                return Err(Error::Config(format!("duplicate level {}", a.epsilon)));
            }
            if !(a.m > b.m && a.k > b.k && a.g > b.g) {
                return Err(Error::Config(format!(
                    "thresholds must decrease in epsilon between {} and {}",
                    a.epsilon, b.epsilon
                )));
            }
        }
        Ok(Self { rows, provenance })
    }

    /// Computes `h` in closed form, `m` by quadrature and root finding, and `k`,
    /// `g` from one set of simulated null half-paths.
    pub fn build(epsilons: &[f64], mc: &MonteCarloConfig, seed: u64) -> Result<Self> {
        for &e in epsilons {
            check_epsilon(e)?;
        }
        let rng = RandomStream::new(seed, &[crate::numerics::component::THRESHOLD]);
        let paths = null_half_paths(mc, &rng.child(0));
        let zetas = paths.iter().map(|s| s.zeta).collect();
        let ints = paths.iter().map(|s| s.log_integral.exp()).collect();
        drop(paths);
        let ks = upper_quantiles(zetas, epsilons, mc.bootstrap, &rng.child(1));
        let gs = upper_quantiles(ints, epsilons, mc.bootstrap, &rng.child(2));
        let rows = epsilons
            .iter()
            .zip(ks.iter().zip(&gs))
            .map(|(&epsilon, (k, g))| {
                Ok(ThresholdRow {
                    epsilon,
                    h: 1.0 / epsilon,
                    m: wt_threshold(epsilon)?,
                    k: k.value,
                    g: g.value,
                    k_se: Some(k.se),
                    g_se: Some(g.se),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            rows,
            ThresholdProvenance {
                method: DEFAULT_METHOD.into(),
                mc_paths: mc.paths,
                seed,
            },
        )
        .map_err(|e| match e {
            Error::Config(msg) => Error::Numeric {
                message: format!("simulated thresholds not monotone ({msg}); increase the path count"),
                best: f64::NAN,
            },
            other => other,
        })
    }

    pub fn rows(&self) -> &[ThresholdRow] {
        &self.rows
    }

    pub fn provenance(&self) -> &ThresholdProvenance {
        &self.provenance
    }

    pub fn row(&self, epsilon: f64) -> Option<&ThresholdRow> {
        self.rows.iter().find(|r| (r.epsilon - epsilon).abs() <= 1e-12 * epsilon)
    }

    /// Threshold on the scale of the corresponding statistic; NPT thresholds
    /// are not tabulated.
    pub fn threshold(&self, kind: TestKind, epsilon: f64) -> Result<f64> {
        let row = self
            .row(epsilon)
            .ok_or_else(|| Error::Config(format!("no thresholds for epsilon = {epsilon}")))?;
        match kind {
            TestKind::Glrt => Ok(row.h),
            TestKind::Wt => Ok(row.m),
            TestKind::Bt1 => Ok(row.k),
            TestKind::Bt2 => Ok(row.g),
            TestKind::Npt => Err(Error::Config("NPT thresholds are closed-form, not tabulated".into())),
        }
    }
}

/// The model restricted to `[θ₁, hi]` with `θ = θ₁`, and `φ*_n`.
fn null_model(model: &IntensityModel, n: usize, theta1: f64) -> Result<(IntensityModel, f64)> {
    let hi = model.domain().hi;
    if !(theta1 >= model.domain().lo && theta1 < hi) {
        return Err(Error::domain(format!(
            "theta1 = {theta1} must lie in [{}, {hi})",
            model.domain().lo
        )));
    }
    let null = IntensityModel::new(
        model.baseline().clone(),
        model.jump(),
        theta1,
        model.tau(),
        ThetaDomain::new(theta1, hi)?,
    )?;
    let r = model.jump();
    let phi_star = model.baseline().value(theta1) / (n as f64 * r * r);
    Ok((null, phi_star))
}

/// All five statistics from one likelihood curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestStatistics {
    /// `ln Q`.
    pub log_glrt: f64,
    /// `(θ̂ − θ₁)/φ*_n`.
    pub wald: f64,
    /// `(θ̃ − θ₁)/φ*_n`.
    pub bayes: f64,
    /// `ln R_n`.
    pub log_bt2: f64,
    /// `ln Z*_n(u₁)`, when `u₁` is given.
    pub log_npt: Option<f64>,
    pub phi_star: f64,
}

pub fn test_statistics(
    obs: &ObservationSet,
    model: &IntensityModel,
    theta1: f64,
    prior: &Prior,
    u1: Option<f64>,
) -> Result<TestStatistics> {
    let (null, phi_star) = null_model(model, obs.n(), theta1)?;
    let density = PriorDensity::new(prior, null.domain())?;
    let p1 = density.pdf(theta1);
    if !(p1 > 0.0) {
        return Err(Error::domain(format!("prior vanishes at theta1 = {theta1}")));
    }
    let curve = LogLikelihoodCurve::new(obs, &null)?;
    let base = curve.value(theta1);
    let mle = mle_on_curve(&curve);
    let post = bayes_on_curve(&curve, &density);
    let log_npt = match u1 {
        None => None,
        Some(u1) => {
            check_u1(u1)?;
            let alt = theta1 + u1 * phi_star;
            if alt > null.domain().hi {
                return Err(Error::domain(format!(
                    "local alternative theta1 + u1 phi* = {alt} leaves the parameter interval"
                )));
            }
            Some(curve.value(alt) - base)
        }
    };
    Ok(TestStatistics {
        log_glrt: (mle.max_loglik - base).max(0.0),
        wald: (mle.theta_hat - theta1) / phi_star,
        bayes: (post.theta_tilde - theta1) / phi_star,
        log_bt2: post.log_normalizer - base - phi_star.ln() - p1.ln(),
        log_npt,
        phi_star,
    })
}

/// `ln Q` with `Q = sup_{θ > θ₁} L(θ)/L(θ₁) ≥ 1`.
pub fn glrt_log_statistic(obs: &ObservationSet, model: &IntensityModel, theta1: f64) -> Result<f64> {
    test_statistics(obs, model, theta1, &Prior::Uniform, None).map(|s| s.log_glrt)
}

/// `ln R_n` with `R_n = (φ*_n)^{-1} ∫ p(θ) L(θ)/L(θ₁) dθ / p(θ₁)`.
pub fn bt2_log_statistic(obs: &ObservationSet, model: &IntensityModel, theta1: f64, prior: &Prior) -> Result<f64> {
    test_statistics(obs, model, theta1, prior, None).map(|s| s.log_bt2)
}

impl TestStatistics {
    /// Rejection rule of `kind` at the given threshold (on the statistic's natural scale).
    pub fn decide(&self, kind: TestKind, threshold: f64) -> Result<Decision> {
        let reject = match kind {
            TestKind::Glrt => self.log_glrt > threshold.ln(),
            TestKind::Wt => self.wald > threshold,
            TestKind::Bt1 => self.bayes > threshold,
            TestKind::Bt2 => self.log_bt2 > threshold.ln(),
            TestKind::Npt => {
                let z = self
                    .log_npt
                    .ok_or_else(|| Error::Config("NPT statistic computed without u1".into()))?;
                z > threshold.ln()
            }
        };
        Ok(Decision::from_rejection(reject))
    }
}

/// Threshold for `spec`, from the table or in closed form for the NPT.
pub fn spec_threshold(spec: &TestSpec, thresholds: &ThresholdTable) -> Result<f64> {
    match spec.kind {
        TestKind::Npt => npt_threshold(
            spec.epsilon,
            spec.u1.ok_or_else(|| Error::Config("NPT needs u1".into()))?,
        ),
        kind => thresholds.threshold(kind, spec.epsilon),
    }
}

pub fn run_test(
    spec: &TestSpec,
    obs: &ObservationSet,
    model: &IntensityModel,
    thresholds: &ThresholdTable,
) -> Result<Decision> {
    let threshold = spec_threshold(spec, thresholds)?;
    let stats = test_statistics(obs, model, spec.theta1, &spec.prior, spec.u1)?;
    stats.decide(spec.kind, threshold)
}

/// Decision of the limiting experiment on a positive half-path of `Z*_u`.
/// For the NPT, `log_npt` must carry `ln Z*_u(u₁)`.
pub fn limit_decision(kind: TestKind, stats: &PositiveSideStats, log_npt: Option<f64>, threshold: f64) -> Result<Decision> {
    TestStatistics {
        log_glrt: stats.sup_logz,
        wald: stats.argmax,
        bayes: stats.zeta,
        log_bt2: stats.log_integral,
        log_npt,
        phi_star: 1.0,
    }
    .decide(kind, threshold)
}
