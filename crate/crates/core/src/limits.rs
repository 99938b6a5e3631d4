//! The two limiting likelihood-ratio processes and their functionals.
//!
//! * Vanishing jump: `ln Z*(v) = W(v) − |v|/2` with a two-sided Brownian
//!   motion `W`, and under local alternatives `ln Z*_u(v) = W(v) − |v−u|/2 + u/2`.
//! * Fixed jump: `ln Z*_ρ(v) = ρY⁺(v) − v` for `v ≥ 0` and
//!   `−ρY⁻((−v)−) − v` for `v < 0`, with independent Poisson processes `Y±`.
//!
//! Brownian paths are generated side by side, outward from `v = 0`, with exact
//! Gaussian increments. A side is abandoned once it is past its drift peak and
//! has fallen `stop_drop` below its running maximum: since `Z*` is a martingale
//! in `|v|`, the probability that it ever climbs back is `e^{−stop_drop}`, and
//! its remaining contribution to the integrals is of the same relative order.
//! Far below the running maximum the grid is coarsened for the same reason.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::{normal_cdf, RandomStream};

const REFINE_ZONE: f64 = 2.0;
const REFINE_FACTOR: f64 = 10.0;
/// Depth below the running maximum where the grid starts to coarsen.
const FINE_DEPTH: f64 = 6.0;
const DEEP_DEPTH: f64 = 12.0;

/// Discretization of a limit path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitPathConfig {
    step: f64,
    radius: f64,
    refine_near_zero: bool,
    stop_drop: f64,
}

impl Default for LimitPathConfig {
    fn default() -> Self {
        Self {
            step: 0.005,
            radius: 128.0,
            refine_near_zero: true,
            stop_drop: 25.0,
        }
    }
}

impl LimitPathConfig {
    /// Grid step `h ≤ 0.01` and truncation radius `D ≥ 64`.
    pub fn new(step: f64, radius: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 0.01) {
            return Err(Error::Config(format!("limit grid step {step} must lie in (0, 0.01]")));
        }
        if !(radius >= 64.0 && radius.is_finite()) {
            return Err(Error::Config(format!("truncation radius {radius} must be at least 64")));
        }
        Ok(Self {
            step,
            radius,
            ..Self::default()
        })
    }

    /// Use `h/10` on `|v| ≤ 2`.
    pub fn with_refinement(mut self, refine: bool) -> Self {
        self.refine_near_zero = refine;
        self
    }

    /// Early-stopping depth; `f64::INFINITY` walks every side out to `D`.
    pub fn with_stop_drop(mut self, drop: f64) -> Result<Self> {
        if !(drop > 0.0) {
            return Err(Error::Config(format!("stop depth {drop} must be positive")));
        }
        self.stop_drop = drop;
        Ok(self)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn refine_near_zero(&self) -> bool {
        self.refine_near_zero
    }

    pub fn stop_drop(&self) -> f64 {
        self.stop_drop
    }
}

/// Walks one side of `ln Z*_u` in the distance `s = |v|`, calling `visit(s, ln Z)`
/// at every grid point starting with `(0, 0)`. The drift is `−|s − peak|/2 + peak/2`.
fn walk_side<R: Rng + ?Sized>(
    cfg: &LimitPathConfig,
    peak: f64,
    limit: f64,
    rng: &mut R,
    mut visit: impl FnMut(f64, f64),
) {
    let fine = cfg.step;
    // The refined zone is laid out by an integer counter so that it ends exactly at its edge.
    let refined_steps = if cfg.refine_near_zero {
        (REFINE_ZONE.min(limit) * REFINE_FACTOR / fine).ceil() as u64
    } else {
        0
    };
    let refined_edge = REFINE_ZONE.min(limit);
    let mut k = 0_u64;
    let mut s = 0.0_f64;
    let mut logz = 0.0_f64;
    let mut top = 0.0_f64;
    let (mut last_ds, mut root_ds) = (f64::NAN, f64::NAN);
    visit(s, logz);
    while s < limit {
        let next = if k < refined_steps {
            k += 1;
            if k == refined_steps {
                refined_edge
            } else {
                refined_edge * k as f64 / refined_steps as f64
            }
        } else {
            let depth = top - logz;
            let ds = if depth < FINE_DEPTH {
                fine
            } else if depth < DEEP_DEPTH {
                16.0 * fine
            } else {
                64.0 * fine
            };
            if limit - (s + ds) < 1e-9 * ds {
                limit
            } else {
                s + ds
            }
        };
        let ds = next - s;
        if ds != last_ds {
            last_ds = ds;
            root_ds = ds.sqrt();
        }
        let drift = -0.5 * ((next - peak).abs() - (s - peak).abs());
        let z: f64 = rng.sample(StandardNormal);
        logz += drift + root_ds * z;
        s = next;
        visit(s, logz);
        top = top.max(logz);
        if s > peak && logz < top - cfg.stop_drop {
            break;
        }
    }
}

/// Running functionals of one side, with integrals kept relative to `e^{scale}`.
#[derive(Debug, Clone)]
struct SideStats {
    exclude_origin: bool,
    /// Previous grid point and its `e^{ln Z − scale}`.
    prev: Option<(f64, f64)>,
    sup: f64,
    argmax: f64,
    best: f64,
    scale: f64,
    i0: f64,
    i1: f64,
}

impl SideStats {
    fn new(exclude_origin: bool) -> Self {
        Self {
            exclude_origin,
            prev: None,
            sup: f64::NEG_INFINITY,
            argmax: f64::NAN,
            best: f64::NEG_INFINITY,
            scale: 0.0,
            i0: 0.0,
            i1: 0.0,
        }
    }

    fn visit(&mut self, s: f64, l: f64) {
        self.sup = self.sup.max(l);
        if !(self.exclude_origin && s == 0.0) && l > self.best {
            self.best = l;
            self.argmax = s;
        }
        let e1 = match self.prev {
            Some((s0, mut e0)) => {
                if l > self.scale {
                    let r = (self.scale - l).exp();
                    self.i0 *= r;
                    self.i1 *= r;
                    e0 *= r;
                    self.scale = l;
                }
                let e1 = (l - self.scale).exp();
                let ds = s - s0;
                self.i0 += 0.5 * ds * (e0 + e1);
                self.i1 += 0.5 * ds * (s0 * e0 + s * e1);
                e1
            }
            None => (l - self.scale).exp(),
        };
        self.prev = Some((s, e1));
    }
}

fn side_streams(rng: &mut RandomStream) -> (RandomStream, RandomStream) {
    let key: u64 = rng.gen::<u64>() & !1;
    (rng.child(key), rng.child(key | 1))
}

fn check_shift(u: f64) -> Result<()> {
    if !(u >= 0.0 && u.is_finite()) {
        return Err(Error::domain(format!("shift u = {u} must be finite and nonnegative")));
    }
    Ok(())
}

/// Functionals of `ln Z*_u` restricted to `v > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositiveSideStats {
    /// `sup_{v>0} ln Z*_u(v)`, which includes the limit `0` at `v → 0+`.
    pub sup_logz: f64,
    /// Grid argmax over `v > 0` (the statistic `ξ*_{u,+}`).
    pub argmax: f64,
    /// `ln ∫_0^D Z*_u(v) dv`.
    pub log_integral: f64,
    /// `∫ v Z*_u / ∫ Z*_u` over `(0, D]` (the statistic `ζ*_{u,+}`).
    pub zeta: f64,
}

/// One positive half-path of `Z*_u`; draws only from the stream that the
/// two-sided samplers use for `v > 0`.
pub fn positive_side(u: f64, config: &LimitPathConfig, rng: &mut RandomStream) -> Result<PositiveSideStats> {
    check_shift(u)?;
    let (_, mut right) = side_streams(rng);
    let mut st = SideStats::new(true);
    walk_side(config, u, config.radius, &mut right, |s, l| st.visit(s, l));
    Ok(PositiveSideStats {
        sup_logz: st.sup,
        argmax: st.argmax,
        log_integral: st.scale + st.i0.ln(),
        zeta: st.i1 / st.i0,
    })
}

pub fn sample_xi_plus(u: f64, config: &LimitPathConfig, rng: &mut RandomStream) -> Result<f64> {
    positive_side(u, config, rng).map(|s| s.argmax)
}

pub fn sample_zeta_plus(u: f64, config: &LimitPathConfig, rng: &mut RandomStream) -> Result<f64> {
    positive_side(u, config, rng).map(|s| s.zeta)
}

/// `sup_{v>0} ln Z*(v)`, exponentially distributed in the limit.
pub fn sup_logz_positive(config: &LimitPathConfig, rng: &mut RandomStream) -> f64 {
    positive_side(0.0, config, rng)
        .expect("zero shift is valid")
        .sup_logz
}

/// `∫_0^∞ Z*(v) dv`, the limit of the second Bayesian test statistic.
pub fn sample_positive_integral(config: &LimitPathConfig, rng: &mut RandomStream) -> f64 {
    positive_side(0.0, config, rng)
        .expect("zero shift is valid")
        .log_integral
        .exp()
}

fn two_sided(config: &LimitPathConfig, rng: &mut RandomStream) -> (SideStats, SideStats) {
    let (mut left, mut right) = side_streams(rng);
    let mut neg = SideStats::new(false);
    let mut pos = SideStats::new(false);
    walk_side(config, 0.0, config.radius, &mut left, |s, l| neg.visit(s, l));
    walk_side(config, 0.0, config.radius, &mut right, |s, l| pos.visit(s, l));
    (neg, pos)
}

/// Picks the argmax across sides: larger value, then smaller `|v|`, then `v < 0`.
fn pick_argmax(neg: (f64, f64), pos: (f64, f64)) -> f64 {
    let (neg_s, neg_l) = neg;
    let (pos_s, pos_l) = pos;
    if pos_l > neg_l || (pos_l == neg_l && pos_s < neg_s) {
        pos_s
    } else {
        -neg_s
    }
}

/// `ξ* = argmax_v Z*(v)` on the grid over `[−D, D]`.
pub fn sample_xi_star(config: &LimitPathConfig, rng: &mut RandomStream) -> f64 {
    let (neg, pos) = two_sided(config, rng);
    pick_argmax((neg.argmax, neg.best), (pos.argmax, pos.best))
}

/// `ζ* = ∫ v Z*(v) dv / ∫ Z*(v) dv` by the trapezoid rule over `[−D, D]`.
pub fn sample_zeta_star(config: &LimitPathConfig, rng: &mut RandomStream) -> f64 {
    let (neg, pos) = two_sided(config, rng);
    combine_zeta(&neg, &pos)
}

fn combine_zeta(neg: &SideStats, pos: &SideStats) -> f64 {
    let m = neg.scale.max(pos.scale);
    let (wn, wp) = ((neg.scale - m).exp(), (pos.scale - m).exp());
    (wp * pos.i1 - wn * neg.i1) / (wp * pos.i0 + wn * neg.i0)
}

/// `ξ*` and `ζ*` of the same path.
pub fn sample_xi_zeta_star(config: &LimitPathConfig, rng: &mut RandomStream) -> (f64, f64) {
    let (neg, pos) = two_sided(config, rng);
    (
        pick_argmax((neg.argmax, neg.best), (pos.argmax, pos.best)),
        combine_zeta(&neg, &pos),
    )
}

/// `u + argmax_{v > −u} ln Z*(v)`, which has the law of `ξ*_{u,+}`.
pub fn sample_xi_plus_via_null(u: f64, config: &LimitPathConfig, rng: &mut RandomStream) -> Result<f64> {
    check_shift(u)?;
    let (mut left, mut right) = side_streams(rng);
    let mut pos = SideStats::new(u == 0.0);
    walk_side(config, 0.0, config.radius, &mut right, |s, l| pos.visit(s, l));
    if u == 0.0 {
        return Ok(pos.argmax);
    }
    let mut neg = SideStats::new(false);
    let limit = u.min(config.radius);
    walk_side(config, 0.0, limit, &mut left, |s, l| {
        if s < u {
            neg.visit(s, l)
        }
    });
    Ok(u + pick_argmax((neg.argmax, neg.best), (pos.argmax, pos.best)))
}

/// A materialized two-sided path of `ln Z*`, sorted by `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerLrPath {
    grid: Vec<f64>,
    logz: Vec<f64>,
    origin: usize,
}

pub fn simulate_wiener_lr(config: &LimitPathConfig, rng: &mut RandomStream) -> WienerLrPath {
    let (mut left, mut right) = side_streams(rng);
    let mut neg = Vec::new();
    let mut pos = Vec::new();
    walk_side(config, 0.0, config.radius, &mut left, |s, l| neg.push((s, l)));
    walk_side(config, 0.0, config.radius, &mut right, |s, l| pos.push((s, l)));
    let origin = neg.len() - 1;
    let (grid, logz) = neg
        .iter()
        .rev()
        .map(|&(s, l)| (-s, l))
        .chain(pos.into_iter().skip(1))
        .unzip();
    WienerLrPath { grid, logz, origin }
}

impl WienerLrPath {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn logz(&self) -> &[f64] {
        &self.logz
    }

    /// Grid argmax, ties broken towards smaller `|v|` and then `v < 0`.
    pub fn argmax(&self) -> f64 {
        let side = |it: &mut dyn Iterator<Item = usize>| {
            let mut best = (f64::NAN, f64::NEG_INFINITY);
            for i in it {
                if self.logz[i] > best.1 {
                    best = (self.grid[i].abs(), self.logz[i]);
                }
            }
            best
        };
        let neg = side(&mut (0..=self.origin).rev());
        let pos = side(&mut (self.origin..self.grid.len()));
        pick_argmax(neg, pos)
    }

    /// Trapezoid ratio `∫ v Z / ∫ Z`.
    pub fn zeta(&self) -> f64 {
        let m = self.logz.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut i0, mut i1) = (0.0, 0.0);
        for k in 1..self.grid.len() {
            let (v0, v1) = (self.grid[k - 1], self.grid[k]);
            let (e0, e1) = ((self.logz[k - 1] - m).exp(), (self.logz[k] - m).exp());
            i0 += 0.5 * (v1 - v0) * (e0 + e1);
            i1 += 0.5 * (v1 - v0) * (v0 * e0 + v1 * e1);
        }
        i1 / i0
    }

    /// Every `k`-th grid point on each side, counted from `v = 0`; side ends are kept.
    pub fn subsample(&self, k: usize) -> WienerLrPath {
        assert!(k >= 1, "subsampling factor must be positive");
        let last = self.grid.len() - 1;
        let keep = |i: usize| {
            let d = i.abs_diff(self.origin);
            d.is_multiple_of(k) || i == 0 || i == last
        };
        let idx: Vec<usize> = (0..self.grid.len()).filter(|&i| keep(i)).collect();
        let origin = idx.iter().position(|&i| i == self.origin).expect("origin kept");
        WienerLrPath {
            grid: idx.iter().map(|&i| self.grid[i]).collect(),
            logz: idx.iter().map(|&i| self.logz[i]).collect(),
            origin,
        }
    }
}

/// Jump times of the two Poisson processes driving `ln Z*_ρ` on `[−D, D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonLrPath {
    rho: f64,
    jump: f64,
    radius: f64,
    plus: Vec<f64>,
    minus: Vec<f64>,
}

/// Simulates `Z*_ρ` for a fixed jump `r ≠ 0` at baseline level `ψ(θ)`, with
/// `ρ = |ln(ψ/(ψ+r))|`.
pub fn simulate_poisson_lr(
    psi_theta: f64,
    r: f64,
    config: &LimitPathConfig,
    rng: &mut RandomStream,
) -> Result<PoissonLrPath> {
    if r == 0.0 || !r.is_finite() {
        return Err(Error::domain(format!(
            "jump r = {r}: the Poisson limit needs a fixed nonzero jump"
        )));
    }
    if !(psi_theta > 0.0 && psi_theta + r > 0.0) {
        return Err(Error::domain(format!(
            "intensities psi = {psi_theta}, psi + r = {} must be positive",
            psi_theta + r
        )));
    }
    let rho = (psi_theta / (psi_theta + r)).ln().abs();
    let (mut left, mut right) = side_streams(rng);
    let arrivals = |rate: f64, rng: &mut RandomStream| {
        let mut t = 0.0;
        let mut out = Vec::new();
        loop {
            let e: f64 = rng.sample(Exp1);
            t += e / rate;
            if t > config.radius {
                return out;
            }
            out.push(t);
        }
    };
    let plus = arrivals(-1.0 / (-rho).exp_m1() - 1.0, &mut right);
    let minus = arrivals(-1.0 / (-rho).exp_m1(), &mut left);
    Ok(PoissonLrPath {
        rho,
        jump: r,
        radius: config.radius,
        plus,
        minus,
    })
}

impl PoissonLrPath {
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Jump times of `Y⁺`, intensity `1/(e^ρ − 1)`.
    pub fn plus_jumps(&self) -> &[f64] {
        &self.plus
    }

    /// Jump times of `Y⁻`, intensity `1/(1 − e^{−ρ})`.
    pub fn minus_jumps(&self) -> &[f64] {
        &self.minus
    }

    pub fn logz(&self, v: f64) -> Result<f64> {
        if !(v.abs() <= self.radius) {
            return Err(Error::domain(format!(
                "v = {v} outside the simulated range [-{0}, {0}]",
                self.radius
            )));
        }
        Ok(if v >= 0.0 {
            let count = self.plus.partition_point(|&t| t <= v);
            self.rho * count as f64 - v
        } else {
            let count = self.minus.partition_point(|&t| t < -v);
            -self.rho * count as f64 - v
        })
    }

    /// `Z_θ(u) = Z*_ρ(−r u)` on the `1/n` scale.
    pub fn z_theta(&self, u: f64) -> Result<f64> {
        self.logz(-self.jump * u).map(f64::exp)
    }
}

/// `E(ξ*)²` of the two-sided argmax, from a high-resolution simulation
/// (`h = 0.001`, `D = 256`, 10⁶ paths); see `tests/oracles.rs`.
pub const XI_STAR_SECOND_MOMENT: f64 = 25.83;

/// Density of `ξ₊*`: `f(t) = (2πt)^{−1/2} e^{−t/8} − Φ(−√t/2)/2`.
pub fn xi_plus_density(t: f64) -> Result<f64> {
    if !(t > 0.0) || t.is_nan() {
        return Err(Error::domain(format!("density argument t = {t} must be positive")));
    }
    let lead = (-t / 8.0).exp() / (2.0 * std::f64::consts::PI * t).sqrt();
    Ok((lead - 0.5 * normal_cdf(-0.5 * t.sqrt())).max(0.0))
}

/// Upper bound on `∫_T^∞ f(t) dt`.
pub fn xi_plus_tail_bound(cutoff: f64) -> f64 {
    8.0 * (-cutoff / 8.0).exp() / (2.0 * std::f64::consts::PI * cutoff).sqrt()
}
