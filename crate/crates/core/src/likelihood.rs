//! Exact log-likelihood of the change-point model, window-form likelihood
//! ratios and normalized likelihood-ratio paths.

use crate::error::{Error, Result};
use crate::model::{IntensityModel, JumpCase, JumpSchedule, ObservationSet};
use crate::numerics::NeumaierSum;

/// Normalization rates of the likelihood ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePair {
    /// `φ_n`: `1/n` for a non-vanishing jump, `1/(n r_n²)` for a vanishing one.
    pub phi: f64,
    /// `φ*_n`: `φ_n/|r|`, respectively `φ_n ψ(θ)`.
    pub phi_star: f64,
    /// Exponent in the linear term `u r_n^γ`: `+1` or `-1`.
    pub gamma: i32,
}

pub fn rates(n: usize, schedule: &JumpSchedule, psi_at_theta: f64) -> Result<RatePair> {
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    let nf = n as f64;
    let r = schedule.jump_at(n);
    Ok(match schedule.case() {
        JumpCase::NonzeroLimit => RatePair {
            phi: 1.0 / nf,
            phi_star: 1.0 / (nf * r.abs()),
            gamma: 1,
        },
        JumpCase::Vanishing => {
            let phi = 1.0 / (nf * r * r);
            RatePair {
                phi,
                phi_star: phi * psi_at_theta,
                gamma: -1,
            }
        }
    })
}

fn check_events(obs: &ObservationSet, model: &IntensityModel) -> Result<()> {
    if (obs.tau() - model.tau()).abs() > 1e-12 * model.tau() {
        return Err(Error::domain(format!(
            "observation horizon {} differs from model horizon {}",
            obs.tau(),
            model.tau()
        )));
    }
    Ok(())
}

/// `ln L_n(θ) = Σ_j Σ_i ln λ_θ(t_{j,i}) − n ∫_0^τ (λ_θ(t) − 1) dt` at `θ = model.theta()`.
pub fn log_likelihood(obs: &ObservationSet, model: &IntensityModel) -> Result<f64> {
    check_events(obs, model)?;
    let mut acc = NeumaierSum::new();
    for t in obs.iter_events() {
        let lambda = model.intensity_at(t)?;
        if !(lambda > 0.0) {
            return Err(Error::ModelInvalid(format!(
                "intensity {lambda} at event time {t}"
            )));
        }
        acc.add(lambda.ln());
    }
    let n = obs.n() as f64;
    let integral = model.integrated_intensity(0.0, model.tau())?;
    acc.add(-n * (integral - model.tau()));
    Ok(acc.value())
}

fn check_theta(model: &IntensityModel, theta: f64) -> Result<()> {
    let d = model.domain();
    if !d.contains(theta) {
        return Err(Error::domain(format!(
            "theta = {theta} outside [{}, {}]",
            d.lo, d.hi
        )));
    }
    Ok(())
}

#[inline]
fn log_jump_ratio(model: &IntensityModel, t: f64) -> f64 {
    (model.jump() / model.baseline().value(t)).ln_1p()
}

/// `ln L_n(θ₂) − ln L_n(θ₁)` from the events between the two locations only.
///
/// For `θ₂ > θ₁` this is `Σ_{t ∈ (θ₁, θ₂]} ln(ψ(t)/(ψ(t)+r)) + n r (θ₂ − θ₁)`,
/// and symmetrically for `θ₂ < θ₁`.
pub fn log_lr(obs: &ObservationSet, model: &IntensityModel, theta1: f64, theta2: f64) -> Result<f64> {
    check_events(obs, model)?;
    check_theta(model, theta1)?;
    check_theta(model, theta2)?;
    Ok(window_log_lr(obs, model, theta1, theta2))
}

pub(crate) fn window_log_lr(obs: &ObservationSet, model: &IntensityModel, theta1: f64, theta2: f64) -> f64 {
    if theta1 == theta2 {
        return 0.0;
    }
    let (a, b, sign) = if theta2 > theta1 {
        (theta1, theta2, -1.0)
    } else {
        (theta2, theta1, 1.0)
    };
    let mut acc = NeumaierSum::new();
    for tr in obs.trajectories() {
        for &t in tr.window(a, b) {
            acc.add(sign * log_jump_ratio(model, t));
        }
    }
    acc.add(obs.n() as f64 * model.jump() * (theta2 - theta1));
    acc.value()
}

/// Log-likelihood ratio path `u ↦ ln L(θ + u·scale) − ln L(θ)`.
///
/// Every `θ + u·scale` must stay inside the closed parameter interval; the
/// error names the violated bound.
pub fn llr_path(
    obs: &ObservationSet,
    model: &IntensityModel,
    theta: f64,
    scale: f64,
    u_grid: &[f64],
) -> Result<Vec<f64>> {
    check_events(obs, model)?;
    check_theta(model, theta)?;
    let d = model.domain();
    let (u_lo, u_hi) = ((d.lo - theta) / scale, (d.hi - theta) / scale);
    u_grid
        .iter()
        .map(|&u| {
            let target = theta + u * scale;
            if target < d.lo {
                Err(Error::domain(format!(
                    "u = {u} below the lower bound {u_lo} of U_n"
                )))
            } else if target > d.hi {
                Err(Error::domain(format!(
                    "u = {u} above the upper bound {u_hi} of U_n"
                )))
            } else {
                Ok(window_log_lr(obs, model, theta, target))
            }
        })
        .collect()
}

/// `ln Z_{n,θ}(u)` on `u_grid`, with the rate `φ_n` of the jump schedule.
pub fn normalized_llr_path(
    obs: &ObservationSet,
    model: &IntensityModel,
    theta: f64,
    schedule: &JumpSchedule,
    u_grid: &[f64],
) -> Result<Vec<f64>> {
    let scheduled = schedule.jump_at(obs.n());
    if (scheduled - model.jump()).abs() > 1e-12 * scheduled.abs().max(1.0) {
        return Err(Error::domain(format!(
            "model jump {} does not match the schedule value {scheduled} at n = {}",
            model.jump(),
            obs.n()
        )));
    }
    let psi = model.baseline().value(theta);
    let rp = rates(obs.n(), schedule, psi)?;
    llr_path(obs, model, theta, rp.phi, u_grid)
}

/// Which one-sided value of the càdlàg likelihood to read at a breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// `θ ↦ ln L_n(θ)` over the parameter interval, stored as a constant plus the
/// linear drift `n r θ` plus a step function that drops at each pooled event time.
#[derive(Debug, Clone)]
pub struct LogLikelihoodCurve {
    lo: f64,
    hi: f64,
    times: Vec<f64>,
    /// `suffix[k] = Σ_{t ≥ times[k]} ln(1 + r/ψ(t))`, plus all events beyond `hi`.
    suffix: Vec<f64>,
    constant: f64,
    slope: f64,
}

impl LogLikelihoodCurve {
    pub fn new(obs: &ObservationSet, model: &IntensityModel) -> Result<Self> {
        check_events(obs, model)?;
        let d = model.domain();
        let mut inside: Vec<(f64, f64)> = Vec::new();
        let mut beyond = NeumaierSum::new();
        let mut base = NeumaierSum::new();
        for t in obs.iter_events() {
            let psi = model.baseline().value(t);
            if !(psi > 0.0) || (t > d.lo && !(psi + model.jump() > 0.0)) {
                return Err(Error::ModelInvalid(format!("non-positive intensity at {t}")));
            }
            base.add(psi.ln());
            if t > d.hi {
                beyond.add(log_jump_ratio(model, t));
            } else if t >= d.lo {
                inside.push((t, log_jump_ratio(model, t)));
            }
        }
        inside.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut times: Vec<f64> = Vec::with_capacity(inside.len());
        let mut weights: Vec<f64> = Vec::with_capacity(inside.len());
        for (t, w) in inside {
            if times.last() == Some(&t) {
                *weights.last_mut().expect("nonempty") += w;
            } else {
                times.push(t);
                weights.push(w);
            }
        }
        let mut suffix = vec![0.0; times.len() + 1];
        let mut acc = beyond;
        suffix[times.len()] = acc.value();
        for k in (0..times.len()).rev() {
            acc.add(weights[k]);
            suffix[k] = acc.value();
        }

        let n = obs.n() as f64;
        let tau = model.tau();
        base.add(-n * (model.baseline().integral(0.0, tau) - tau));
        base.add(-n * model.jump() * tau);
        Ok(Self {
            lo: d.lo,
            hi: d.hi,
            times,
            suffix,
            constant: base.value(),
            slope: n * model.jump(),
        })
    }

    /// Distinct pooled event times inside the closed parameter interval.
    pub fn breakpoints(&self) -> &[f64] {
        &self.times
    }

    /// `d/dθ ln L_n` between breakpoints: `n r`.
    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// `ln L_n(θ)`; right-continuous, so this is also the right limit.
    pub fn value(&self, theta: f64) -> f64 {
        let k = self.times.partition_point(|&t| t <= theta);
        self.constant + self.slope * theta + self.suffix[k]
    }

    /// `ln L_n(θ−)`.
    pub fn left_limit(&self, theta: f64) -> f64 {
        let k = self.times.partition_point(|&t| t < theta);
        self.constant + self.slope * theta + self.suffix[k]
    }

    pub fn one_sided(&self, theta: f64, side: Side) -> f64 {
        match side {
            Side::Left => self.left_limit(theta),
            Side::Right => self.value(theta),
        }
    }
}
