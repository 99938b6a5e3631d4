use crate::error::{Error, Result};

const MAX_ITER: usize = 300;

/// Brent's bracketing root finder (inverse quadratic / secant steps safeguarded
/// by bisection).
///
/// Requires `g(lo)` and `g(hi)` of opposite sign (or one of them zero). Stops as
/// soon as `|g(x)| < tol` or the bracket shrinks below `tol` (never below a few
/// ulps of the current iterate).
pub fn find_root<F>(mut g: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::domain(format!("invalid bracket [{lo}, {hi}]")));
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (g(a), g(b));
    if fa.is_nan() || fb.is_nan() {
        return Err(Error::domain("function is NaN at a bracket end"));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::domain(format!(
            "no sign change on [{lo}, {hi}]: g(lo) = {fa}, g(hi) = {fb}"
        )));
    }

    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 || fb.abs() < tol {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = g(b);
        if fb.is_nan() {
            return Err(Error::Numeric {
                message: "function returned NaN inside the bracket".into(),
                best: a,
            });
        }
    }
    Err(Error::Numeric {
        message: format!("root finder did not converge in {MAX_ITER} iterations"),
        best: b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::normal_cdf;

    #[test]
    fn linear_root() {
        let x = find_root(|x| x - 2.0, 0.0, 5.0, 1e-12).unwrap();
        assert!((x - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sqrt_two() {
        let x = find_root(|x| x * x - 2.0, 0.0, 2.0, 1e-12).unwrap();
        assert!((x - std::f64::consts::SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn gaussian_upper_five_percent() {
        // Oracle: bisection on the CDF, run independently below.
        let (mut lo, mut hi) = (0.0_f64, 5.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_cdf(mid) < 0.95 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x = find_root(|x| normal_cdf(x) - 0.95, -10.0, 10.0, 1e-14).unwrap();
        assert!((x - lo).abs() < 1e-9);
        assert!((x - 1.644854).abs() < 1e-6);
    }

    #[test]
    fn no_sign_change_is_domain_error() {
        assert!(matches!(
            find_root(|x| x * x + 1.0, -1.0, 1.0, 1e-9),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn endpoint_root() {
        assert_eq!(find_root(|x| x, 0.0, 1.0, 1e-9).unwrap(), 0.0);
    }
}
