//! The change-point intensity model `λ_θ(t) = ψ(t) + r·1{t > θ}` on `[0, τ]`,
//! observation containers, and exact samplers for `n` independent trajectories.

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::numerics::RandomStream;

/// Regular part `ψ` of the intensity.
#[derive(Debug, Clone, PartialEq)]
pub enum Baseline {
    Constant(f64),
    /// Breakpoints `(t, ψ(t))` with strictly increasing `t`, linearly interpolated.
    /// The table must span the whole observation window.
    PiecewiseLinear(Vec<(f64, f64)>),
}

impl Baseline {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Baseline::Constant(c) => *c,
            Baseline::PiecewiseLinear(pts) => {
                let k = pts.partition_point(|p| p.0 <= t);
                if k == 0 {
                    return pts[0].1;
                }
                if k == pts.len() {
                    return pts[pts.len() - 1].1;
                }
                let (t0, y0) = pts[k - 1];
                let (t1, y1) = pts[k];
                y0 + (y1 - y0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// `∫_a^b ψ(t) dt`, exact for both representations.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Baseline::Constant(c) => c * (b - a),
            Baseline::PiecewiseLinear(pts) => {
                let mut knots = vec![a];
                knots.extend(pts.iter().map(|p| p.0).filter(|&t| t > a && t < b));
                knots.push(b);
                knots
                    .windows(2)
                    .map(|w| 0.5 * (self.value(w[0]) + self.value(w[1])) * (w[1] - w[0]))
                    .sum()
            }
        }
    }

    /// Minimum and maximum of `ψ` over `[a, b]`.
    pub fn range_on(&self, a: f64, b: f64) -> (f64, f64) {
        match self {
            Baseline::Constant(c) => (*c, *c),
            Baseline::PiecewiseLinear(pts) => pts
                .iter()
                .map(|p| p.0)
                .filter(|&t| t > a && t < b)
                .chain([a, b])
                .map(|t| self.value(t))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                }),
        }
    }

    /// Breakpoint abscissae strictly inside `(a, b)`; empty for a constant.
    pub fn knots_within(&self, a: f64, b: f64) -> Vec<f64> {
        match self {
            Baseline::Constant(_) => Vec::new(),
            Baseline::PiecewiseLinear(pts) => {
                pts.iter().map(|p| p.0).filter(|&t| t > a && t < b).collect()
            }
        }
    }

    fn validate(&self, tau: f64) -> Result<()> {
        match self {
            Baseline::Constant(c) if c.is_finite() => Ok(()),
            Baseline::Constant(c) => Err(Error::ModelInvalid(format!("baseline value {c}"))),
            Baseline::PiecewiseLinear(pts) => {
                if pts.len() < 2 {
                    return Err(Error::ModelInvalid(
                        "breakpoint table needs at least two points".into(),
                    ));
                }
                if pts.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
                    return Err(Error::ModelInvalid("non-finite breakpoint".into()));
                }
                if pts.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::ModelInvalid(
                        "breakpoint abscissae must be strictly increasing".into(),
                    ));
                }
                if pts[0].0 > 0.0 || pts[pts.len() - 1].0 < tau {
                    return Err(Error::ModelInvalid(format!(
                        "breakpoint table must cover [0, {tau}]"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Parameter set `Θ`, handled through its closure `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaDomain {
    pub lo: f64,
    pub hi: f64,
}

impl ThetaDomain {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::domain(format!("empty parameter interval ({lo}, {hi})")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta >= self.lo && theta <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Intensity `λ_θ(t) = ψ(t) + r·1{t > θ}` on `[0, τ]`.
///
/// Endpoint values `θ = lo` or `θ = hi` are accepted; there the jump is
/// identifiable from one side only.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityModel {
    baseline: Baseline,
    jump: f64,
    theta: f64,
    tau: f64,
    domain: ThetaDomain,
    lower: f64,
    upper: f64,
}

impl IntensityModel {
    pub fn new(
        baseline: Baseline,
        jump: f64,
        theta: f64,
        tau: f64,
        domain: ThetaDomain,
    ) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::domain(format!("horizon tau = {tau} must be positive")));
        }
        if domain.lo < 0.0 || domain.hi > tau {
            return Err(Error::domain(format!(
                "parameter interval [{}, {}] must lie in [0, {tau}]",
                domain.lo, domain.hi
            )));
        }
        if !domain.contains(theta) {
            return Err(Error::domain(format!(
                "theta = {theta} outside [{}, {}]",
                domain.lo, domain.hi
            )));
        }
        if !jump.is_finite() {
            return Err(Error::ModelInvalid(format!("jump size {jump}")));
        }
        baseline.validate(tau)?;
        let (lower, upper) = family_bounds(&baseline, jump, tau, &domain);
        if !(lower > 0.0) {
            return Err(Error::ModelInvalid(format!(
                "intensity not strictly positive: lower bound {lower}"
            )));
        }
        Ok(Self {
            baseline,
            jump,
            theta,
            tau,
            domain,
            lower,
            upper,
        })
    }

    /// Same family with a different change-point location.
    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        if !self.domain.contains(theta) {
            return Err(Error::domain(format!(
                "theta = {theta} outside [{}, {}]",
                self.domain.lo, self.domain.hi
            )));
        }
        Ok(Self {
            theta,
            ..self.clone()
        })
    }

    /// Same intensity family with a different parameter interval (and `θ` kept).
    pub fn with_domain(&self, domain: ThetaDomain) -> Result<Self> {
        Self::new(self.baseline.clone(), self.jump, self.theta, self.tau, domain)
    }

    pub fn baseline(&self) -> &Baseline {
        &self.baseline
    }

    pub fn jump(&self) -> f64 {
        self.jump
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn domain(&self) -> ThetaDomain {
        self.domain
    }

    /// `λ_θ(t)`; the indicator is strict, so `t = θ` gives `ψ(θ)`.
    pub fn intensity_at(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.tau).contains(&t) {
            return Err(Error::domain(format!("t = {t} outside [0, {}]", self.tau)));
        }
        Ok(self.intensity_unchecked(t))
    }

    #[inline]
    pub(crate) fn intensity_unchecked(&self, t: f64) -> f64 {
        let psi = self.baseline.value(t);
        if t > self.theta {
            psi + self.jump
        } else {
            psi
        }
    }

    /// `Λ((a, b]) = ∫_a^b λ_θ(t) dt`.
    pub fn integrated_intensity(&self, a: f64, b: f64) -> Result<f64> {
        if !(0.0 <= a && a <= b && b <= self.tau) {
            return Err(Error::domain(format!(
                "need 0 <= a <= b <= {}, got [{a}, {b}]",
                self.tau
            )));
        }
        let jump_len = (b - a.max(self.theta)).max(0.0);
        Ok(self.baseline.integral(a, b) + self.jump * jump_len)
    }

    /// Uniform bounds `(ℓ, L)` of `λ_θ(t)` over `t ∈ [0, τ]` and every `θ` in the
    /// parameter interval (both indicator states are attained).
    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }
}

fn family_bounds(baseline: &Baseline, jump: f64, tau: f64, domain: &ThetaDomain) -> (f64, f64) {
    let (pre_lo, pre_hi) = baseline.range_on(0.0, domain.hi);
    let (post_lo, post_hi) = baseline.range_on(domain.lo, tau);
    (
        pre_lo.min(post_lo + jump),
        pre_hi.max(post_hi + jump),
    )
}

/// Power-law jump sizes `r_n = c·n^{-κ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpSchedule {
    exponent: f64,
    scale: f64,
}

/// Limit regime of the jump sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpCase {
    /// `κ = 0`: jumps converge to `c ≠ 0`.
    NonzeroLimit,
    /// `0 < κ < 1/2`: jumps vanish, slower than `n^{-1/2}`.
    Vanishing,
}

impl JumpSchedule {
    pub fn new(scale: f64, exponent: f64) -> Result<Self> {
        if !(scale.is_finite() && scale != 0.0) {
            return Err(Error::domain(format!("jump scale {scale} must be nonzero")));
        }
        if !(0.0..0.5).contains(&exponent) {
            return Err(Error::domain(format!(
                "jump exponent {exponent} must lie in [0, 1/2) so that n r_n^2 diverges"
            )));
        }
        Ok(Self { exponent, scale })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn case(&self) -> JumpCase {
        if self.exponent == 0.0 {
            JumpCase::NonzeroLimit
        } else {
            JumpCase::Vanishing
        }
    }

    pub fn jump_at(&self, n: usize) -> f64 {
        self.scale * (n as f64).powf(-self.exponent)
    }
}

/// Event times of one trajectory: strictly increasing, inside `[0, τ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    events: Vec<f64>,
}

impl Trajectory {
    pub fn new(events: Vec<f64>, tau: f64) -> Result<Self> {
        if let Some(&t) = events.iter().find(|t| !(0.0..=tau).contains(*t)) {
            return Err(Error::domain(format!("event {t} outside [0, {tau}]")));
        }
        if events.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("event times must be strictly increasing"));
        }
        Ok(Self { events })
    }

    /// Sorts `events` and nudges repeated values up by one ulp, returning the
    /// number of nudges. Values pushed past `τ` are dropped and counted as well.
    pub(crate) fn repaired(mut events: Vec<f64>, tau: f64) -> (Self, u64) {
        events.sort_by(f64::total_cmp);
        let mut repairs = 0;
        for i in 1..events.len() {
            if events[i] <= events[i - 1] {
                events[i] = events[i - 1].next_up();
                repairs += 1;
            }
        }
        while events.last().is_some_and(|&t| t > tau) {
            events.pop();
            repairs += 1;
        }
        (Self { events }, repairs)
    }

    pub fn events(&self) -> &[f64] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events in the half-open window `(a, b]`.
    pub fn window(&self, a: f64, b: f64) -> &[f64] {
        let i = self.events.partition_point(|&t| t <= a);
        let j = self.events.partition_point(|&t| t <= b);
        &self.events[i..j.max(i)]
    }
}

/// `n` independent trajectories observed on the same window `[0, τ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    trajectories: Vec<Trajectory>,
    tau: f64,
    repairs: u64,
}

impl ObservationSet {
    pub fn new(trajectories: Vec<Trajectory>, tau: f64) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::domain("an observation set needs at least one trajectory"));
        }
        if !(tau > 0.0) {
            return Err(Error::domain(format!("horizon tau = {tau} must be positive")));
        }
        if let Some(t) = trajectories
            .iter()
            .flat_map(|tr| tr.events.last())
            .find(|&&t| t > tau)
        {
            return Err(Error::domain(format!("event {t} beyond tau = {tau}")));
        }
        Ok(Self {
            trajectories,
            tau,
            repairs: 0,
        })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn n(&self) -> usize {
        self.trajectories.len()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn total_events(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// Number of duplicate event times nudged apart while sampling.
    pub fn duplicate_repairs(&self) -> u64 {
        self.repairs
    }

    pub fn iter_events(&self) -> impl Iterator<Item = f64> + '_ {
        self.trajectories.iter().flat_map(|t| t.events.iter().copied())
    }
}

/// Sampling algorithm for [`sample_trajectory_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    /// Composition for a constant baseline, thinning otherwise.
    Auto,
    /// Two homogeneous segments `(0, θ]` and `(θ, τ]`; constant baseline only.
    Composition,
    /// Lewis–Shedler thinning under the constant envelope `L`.
    Thinning,
}

fn homogeneous_segment<R: Rng + ?Sized>(rate: f64, a: f64, b: f64, rng: &mut R, out: &mut Vec<f64>) {
    if rate <= 0.0 || b <= a {
        return;
    }
    let mut t = a;
    loop {
        let gap: f64 = rng.sample(Exp1);
        t += gap / rate;
        if t > b {
            break;
        }
        out.push(t);
    }
}

/// Draws one trajectory of the inhomogeneous Poisson process with intensity `λ_θ`.
pub fn sample_trajectory<R: Rng + ?Sized>(model: &IntensityModel, rng: &mut R) -> Trajectory {
    sample_trajectory_with(model, Sampler::Auto, rng)
        .expect("automatic sampler selection is always valid")
        .0
}

/// As [`sample_trajectory`], with an explicit algorithm. Also returns the
/// number of duplicate-time repairs.
pub fn sample_trajectory_with<R: Rng + ?Sized>(
    model: &IntensityModel,
    sampler: Sampler,
    rng: &mut R,
) -> Result<(Trajectory, u64)> {
    let tau = model.tau;
    let mut events = Vec::new();
    let constant = match model.baseline {
        Baseline::Constant(c) => Some(c),
        Baseline::PiecewiseLinear(_) => None,
    };
    match (sampler, constant) {
        (Sampler::Composition, None) => {
            return Err(Error::domain(
                "composition sampling requires a constant baseline",
            ))
        }
        (Sampler::Auto | Sampler::Composition, Some(psi)) => {
            let split = model.theta.min(tau);
            homogeneous_segment(psi, 0.0, split, rng, &mut events);
            homogeneous_segment(psi + model.jump, split, tau, rng, &mut events);
        }
        (Sampler::Auto | Sampler::Thinning, _) => {
            let envelope = model.upper;
            let mut t = 0.0;
            loop {
                let gap: f64 = rng.sample(Exp1);
                t += gap / envelope;
                if t > tau {
                    break;
                }
                let u: f64 = rng.gen();
                if u * envelope < model.intensity_unchecked(t) {
                    events.push(t);
                }
            }
        }
    }
    Ok(Trajectory::repaired(events, tau))
}

/// `n` independent trajectories; trajectory `j` draws from `rng.child(j)`.
pub fn sample_observation_set(
    model: &IntensityModel,
    n: usize,
    rng: &RandomStream,
) -> Result<ObservationSet> {
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    let mut repairs = 0;
    let trajectories = (0..n)
        .map(|j| {
            let mut stream = rng.child(j as u64);
            let (tr, rep) = sample_trajectory_with(model, Sampler::Auto, &mut stream)
                .expect("automatic sampler selection is always valid");
            repairs += rep;
            tr
        })
        .collect();
    Ok(ObservationSet {
        trajectories,
        tau: model.tau,
        repairs,
    })
}
