use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const GL16_X: [f64; 8] = [
    0.095_012_509_837_637_44,
    0.281_603_550_779_258_9,
    0.458_016_777_657_227_4,
    0.617_876_244_402_643_7,
    0.755_404_408_355_003,
    0.865_631_202_387_831_8,
    0.944_575_023_073_232_6,
    0.989_400_934_991_649_9,
];
const GL16_W: [f64; 8] = [
    0.189_450_610_455_068_5,
    0.182_603_415_044_923_6,
    0.169_156_519_395_002_54,
    0.149_595_988_816_576_73,
    0.124_628_971_255_533_87,
    0.095_158_511_682_492_78,
    0.062_253_523_938_647_89,
    0.027_152_459_411_754_095,
];

const MAX_INTERVALS: usize = 4000;

/// Upper integration limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpperLimit {
    Finite(f64),
    /// `+∞`, integrated up to `cutoff`; `tail_bound` must bound `|∫_cutoff^∞ f|`
    /// and is charged against the error budget.
    Infinite { cutoff: f64, tail_bound: f64 },
}

/// 16-point Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre_16<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in GL16_X.iter().zip(GL16_W.iter()) {
        acc += w * (f(mid - half * x) + f(mid + half * x));
    }
    acc * half
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Piece {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(mid - dx) + f(mid + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Piece {
        a,
        b,
        value: kron * half,
        error: ((kron - gauss) * half).abs(),
    }
}

/// Globally adaptive Gauss–Kronrod (7/15) quadrature to absolute tolerance `tol`.
///
/// The rule never evaluates the integrand at interval ends, so integrable
/// endpoint singularities (such as `t^{-1/2}` at zero) are handled by repeated
/// bisection.
pub fn integrate<F>(mut f: F, a: f64, upper: UpperLimit, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (b, budget) = match upper {
        UpperLimit::Finite(b) => (b, tol),
        UpperLimit::Infinite { cutoff, tail_bound } => {
            if !(tail_bound >= 0.0) || tail_bound >= tol {
                return Err(Error::domain(format!(
                    "tail bound {tail_bound} does not fit in tolerance {tol}; raise the cutoff"
                )));
            }
            (cutoff, tol - tail_bound)
        }
    };
    if !(a.is_finite() && b.is_finite()) || !(tol > 0.0) {
        return Err(Error::domain(format!(
            "invalid quadrature request on [{a}, {b}] with tol {tol}"
        )));
    }
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return integrate(f, b, UpperLimit::Finite(a), tol).map(|v| -v);
    }

    let mut pieces = vec![kronrod(&mut f, a, b)];
    loop {
        let total_err: f64 = pieces.iter().map(|p| p.error).sum();
        let total: f64 = pieces.iter().map(|p| p.value).sum();
        if !total.is_finite() {
            return Err(Error::Numeric {
                message: "integrand produced a non-finite value".into(),
                best: total,
            });
        }
        if total_err <= budget {
            return Ok(total);
        }
        if pieces.len() >= MAX_INTERVALS {
            return Err(Error::Numeric {
                message: format!(
                    "quadrature error estimate {total_err:e} above tolerance after {MAX_INTERVALS} intervals"
                ),
                best: total,
            });
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("nonempty");
        let p = pieces.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            return Err(Error::Numeric {
                message: "quadrature interval collapsed below machine resolution".into(),
                best: total,
            });
        }
        pieces.push(kronrod(&mut f, p.a, mid));
        pieces.push(kronrod(&mut f, mid, p.b));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_on_unit_interval() {
        let v = integrate(|x| x, 0.0, UpperLimit::Finite(1.0), 1e-12).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let v = integrate(|x| x * x, 1.0, UpperLimit::Finite(0.0), 1e-12).unwrap();
        assert!((v + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_half_identity() {
        // ∫₀^∞ e^{-t/8} (2πt)^{-1/2} dt = √8 Γ(1/2) / √(2π) = 2.
        let cutoff = 400.0;
        let tail = 8.0 * (-cutoff / 8.0_f64).exp() / (2.0 * std::f64::consts::PI * cutoff).sqrt();
        let v = integrate(
            |t| (-t / 8.0).exp() / (2.0 * std::f64::consts::PI * t).sqrt(),
            0.0,
            UpperLimit::Infinite {
                cutoff,
                tail_bound: tail,
            },
            1e-10,
        )
        .unwrap();
        assert!((v - 2.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn tail_bound_must_fit_budget() {
        let r = integrate(
            |t| (-t).exp(),
            0.0,
            UpperLimit::Infinite {
                cutoff: 1.0,
                tail_bound: 0.4,
            },
            1e-6,
        );
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn gauss_legendre_is_exact_for_degree_31() {
        let v = gauss_legendre_16(|x| x.powi(31) + x.powi(30), -1.0, 1.0);
        assert!((v - 2.0 / 31.0).abs() < 1e-13);
    }

    #[test]
    fn non_convergence_reports_best_estimate() {
        let r = integrate(|x| (1.0 / x).sin() / x, 1e-9, UpperLimit::Finite(1.0), 1e-15);
        assert!(matches!(r, Err(Error::Numeric { .. })));
    }
}
