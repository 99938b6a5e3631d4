use super::root::find_root;
use crate::error::{Error, Result};

/// Standard normal distribution function, evaluated through `erfc` so that both
/// tails keep full relative precision.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Φ(x)`.
pub fn normal_sf(x: f64) -> f64 {
    normal_cdf(-x)
}

/// Inverse of [`normal_cdf`], obtained by bracketed root finding on the CDF itself.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("quantile level {p} outside (0, 1)")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    if p > 0.5 {
        return normal_quantile(1.0 - p).map(|q| -q);
    }
    // Φ(-38.5) underflows below the smallest positive normal, so this bracket
    // covers every representable lower-tail level.
    let target = p;
    find_root(|x| normal_cdf(x) - target, -40.0, 0.0, 1e-300).or_else(|e| match e {
        Error::Numeric { best, .. } => Ok(best),
        other => Err(other),
    })
}
