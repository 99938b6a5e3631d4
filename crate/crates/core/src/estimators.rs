//! Maximum likelihood and Bayesian (posterior mean) estimators of the
//! change-point location, computed exactly from the piecewise-linear structure
//! of `θ ↦ ln L_n(θ)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::likelihood::LogLikelihoodCurve;
use crate::model::{IntensityModel, ObservationSet, ThetaDomain};
use crate::numerics::{gauss_legendre_16, NeumaierSum};

/// Which one-sided value realizes the supremum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AttainedSide {
    LeftLimit,
    RightLimit,
    /// The likelihood is continuous at the maximizer.
    Interior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MleResult {
    pub theta_hat: f64,
    pub attained_side: AttainedSide,
    pub max_loglik: f64,
    pub candidate_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BayesResult {
    pub theta_tilde: f64,
    /// `ln ∫ p(θ) L_n(θ) dθ` with `p` normalized over the parameter interval.
    pub log_normalizer: f64,
}

/// Prior density on the parameter interval, up to normalization.
#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    Uniform,
    /// Breakpoints `(θ, weight)` interpolated linearly; must span the interval.
    PiecewiseLinear(Vec<(f64, f64)>),
}

/// A prior resolved against a parameter interval.
#[derive(Debug, Clone)]
pub struct PriorDensity {
    prior: Prior,
    domain: ThetaDomain,
    mass: f64,
}

impl PriorDensity {
    /// Normalizes the prior on `domain`. The density must be continuous,
    /// nonnegative at the interval ends and strictly positive inside.
    pub fn new(prior: &Prior, domain: ThetaDomain) -> Result<Self> {
        let mass = match prior {
            Prior::Uniform => domain.width(),
            Prior::PiecewiseLinear(pts) => {
                if pts.len() < 2 || pts.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::domain(
                        "prior breakpoints must be at least two strictly increasing abscissae",
                    ));
                }
                if pts[0].0 > domain.lo || pts[pts.len() - 1].0 < domain.hi {
                    return Err(Error::domain(format!(
                        "prior table must cover [{}, {}]",
                        domain.lo, domain.hi
                    )));
                }
                let at = |t: f64| interpolate(pts, t);
                let inner_ok = pts
                    .iter()
                    .filter(|p| p.0 > domain.lo && p.0 < domain.hi)
                    .all(|p| p.1 > 0.0 && p.1.is_finite());
                let (a, b) = (at(domain.lo), at(domain.hi));
                if !inner_ok || !(a >= 0.0 && b >= 0.0) {
                    return Err(Error::domain(
                        "prior density must be strictly positive inside the interval",
                    ));
                }
                let mut knots = vec![domain.lo];
                knots.extend(pts.iter().map(|p| p.0).filter(|&t| t > domain.lo && t < domain.hi));
                knots.push(domain.hi);
                let mass: f64 = knots
                    .windows(2)
                    .map(|w| 0.5 * (at(w[0]) + at(w[1])) * (w[1] - w[0]))
                    .sum();
                if !(mass > 0.0) || knots.len() == 2 && a == 0.0 && b == 0.0 {
                    return Err(Error::domain("prior density vanishes on the interval"));
                }
                mass
            }
        };
        Ok(Self {
            prior: prior.clone(),
            domain,
            mass,
        })
    }

    /// Normalized density at `θ`.
    pub fn pdf(&self, theta: f64) -> f64 {
        match &self.prior {
            Prior::Uniform => 1.0 / self.mass,
            Prior::PiecewiseLinear(pts) => interpolate(pts, theta) / self.mass,
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.prior, Prior::Uniform)
    }

    fn knots(&self) -> Vec<f64> {
        match &self.prior {
            Prior::Uniform => Vec::new(),
            Prior::PiecewiseLinear(pts) => pts
                .iter()
                .map(|p| p.0)
                .filter(|&t| t > self.domain.lo && t < self.domain.hi)
                .collect(),
        }
    }
}

fn interpolate(pts: &[(f64, f64)], t: f64) -> f64 {
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

/// Pooled event times strictly inside `(lo, hi)`, plus both ends, sorted and
/// without repetitions.
pub fn candidate_set(obs: &ObservationSet, domain: ThetaDomain) -> Vec<f64> {
    let mut c: Vec<f64> = obs
        .iter_events()
        .filter(|&t| t > domain.lo && t < domain.hi)
        .collect();
    c.push(domain.lo);
    c.push(domain.hi);
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// Exact maximizer of `max{L(θ+), L(θ−)}` over the closed parameter interval
/// of `model`. Ties go to the smallest `θ`.
pub fn mle(obs: &ObservationSet, model: &IntensityModel) -> Result<MleResult> {
    let curve = LogLikelihoodCurve::new(obs, model)?;
    Ok(mle_on_curve(&curve))
}

pub(crate) fn mle_on_curve(curve: &LogLikelihoodCurve) -> MleResult {
    let (lo, hi) = curve.bounds();
    let inner = curve.breakpoints().iter().copied().filter(|&t| t > lo && t < hi);
    let mut best: Option<(f64, f64, AttainedSide)> = None;
    let mut count = 0;
    for c in std::iter::once(lo).chain(inner).chain(std::iter::once(hi)) {
        count += 1;
        let right = curve.value(c);
        let (value, side) = if c > lo {
            let left = curve.left_limit(c);
            if left > right {
                (left, AttainedSide::LeftLimit)
            } else if right > left {
                (right, AttainedSide::RightLimit)
            } else if c < hi {
                (right, AttainedSide::Interior)
            } else {
                (right, AttainedSide::RightLimit)
            }
        } else {
            (right, AttainedSide::RightLimit)
        };
        if best.is_none_or(|b| value > b.1) {
            best = Some((c, value, side));
        }
    }
    let (theta_hat, max_loglik, attained_side) = best.expect("at least two candidates");
    MleResult {
        theta_hat,
        attained_side,
        max_loglik,
        candidate_count: count,
    }
}

/// `∫_0^1 e^{-s w} dw`.
fn exp_mean(s: f64) -> f64 {
    if s < 1e-8 {
        1.0 - 0.5 * s
    } else {
        -(-s).exp_m1() / s
    }
}

/// `∫_0^1 w e^{-s w} dw`.
fn exp_first_moment(s: f64) -> f64 {
    if s < 0.5 {
        // Σ_k (−s)^k / (k! (k + 2))
        let mut term = 1.0;
        let mut acc = 0.5;
        for k in 1..24 {
            term *= -s / k as f64;
            acc += term / (k + 2) as f64;
        }
        acc
    } else {
        (1.0 - (-s).exp() * (1.0 + s)) / (s * s)
    }
}

/// Posterior mean of `θ` under `prior` on the parameter interval of `model`.
pub fn bayes(obs: &ObservationSet, model: &IntensityModel, prior: &Prior) -> Result<BayesResult> {
    let density = PriorDensity::new(prior, model.domain())?;
    let curve = LogLikelihoodCurve::new(obs, model)?;
    Ok(bayes_on_curve(&curve, &density))
}

struct Segment {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

pub(crate) fn bayes_on_curve(curve: &LogLikelihoodCurve, prior: &PriorDensity) -> BayesResult {
    let (lo, hi) = curve.bounds();
    let mut knots: Vec<f64> = curve
        .breakpoints()
        .iter()
        .copied()
        .filter(|&t| t > lo && t < hi)
        .chain(prior.knots())
        .collect();
    knots.push(lo);
    knots.push(hi);
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    let slope = curve.slope();
    let segments: Vec<Segment> = knots
        .windows(2)
        .map(|w| {
            let y0 = curve.value(w[0]);
            Segment {
                x0: w[0],
                x1: w[1],
                y0,
                y1: y0 + slope * (w[1] - w[0]),
            }
        })
        .collect();
    let peak = segments
        .iter()
        .map(|s| s.y0.max(s.y1))
        .fold(f64::NEG_INFINITY, f64::max);

    let mut mass = NeumaierSum::new();
    let mut moment = NeumaierSum::new();
    for seg in &segments {
        let d = seg.x1 - seg.x0;
        if prior.is_uniform() {
            let s = (seg.y1 - seg.y0).abs();
            let p = prior.pdf(seg.x0);
            if seg.y1 >= seg.y0 {
                let scale = (seg.y1 - peak).exp() * p;
                mass.add(scale * d * exp_mean(s));
                moment.add(scale * (seg.x1 * d * exp_mean(s) - d * d * exp_first_moment(s)));
            } else {
                let scale = (seg.y0 - peak).exp() * p;
                mass.add(scale * d * exp_mean(s));
                moment.add(scale * (seg.x0 * d * exp_mean(s) + d * d * exp_first_moment(s)));
            }
        } else {
            let weight = |t: f64| prior.pdf(t) * (seg.y0 + slope * (t - seg.x0) - peak).exp();
            mass.add(gauss_legendre_16(weight, seg.x0, seg.x1));
            moment.add(gauss_legendre_16(|t| t * weight(t), seg.x0, seg.x1));
        }
    }
    let z0 = mass.value();
    BayesResult {
        theta_tilde: (moment.value() / z0).clamp(lo, hi),
        log_normalizer: peak + z0.ln(),
    }
}
