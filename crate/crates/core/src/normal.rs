//! Standard normal distribution: CDF, density and quantile function.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum NormalError {
    #[error("probability {0} outside the open interval (0, 1)")]
    Domain(f64),
}

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
const SERIES_CUTOFF: f64 = 2.5;
const CF_TERMS: usize = 80;

/// Standard normal density.
pub fn norm_pdf<T: Scalar>(x: T) -> T {
    let inv_sqrt_2pi = T::lit(0.398_942_280_401_432_7);
    inv_sqrt_2pi * (-(x * x) / T::lit(2.0)).exp()
}

/// Complementary error function.
///
/// Maclaurin series of `erf` below |x| = 2.5 and a continued fraction above,
/// accurate to roughly machine precision in absolute terms.
pub fn erfc<T: Scalar>(x: T) -> T {
    if x < T::zero() {
        return T::lit(2.0) - erfc(-x);
    }
    if x < T::lit(SERIES_CUTOFF) {
        return T::one() - erf_series(x);
    }
    // erfc(x) = exp(-x^2) / sqrt(pi) / (x + (1/2)/(x + (2/2)/(x + ...)))
    let mut f = x;
    for n in (1..=CF_TERMS).rev() {
        f = x + T::lit(n as f64 / 2.0) / f;
    }
    (-(x * x)).exp() * T::lit(FRAC_1_SQRT_PI) / f
}

fn erf_series<T: Scalar>(x: T) -> T {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for n in 1..200 {
        term = term * (-x2) / T::lit(n as f64);
        let contrib = term / T::lit((2 * n + 1) as f64);
        sum = sum + contrib;
        if contrib.abs() <= T::epsilon() * sum.abs() {
            break;
        }
    }
    sum * T::lit(2.0 * FRAC_1_SQRT_PI)
}

/// Standard normal CDF.
pub fn norm_cdf<T: Scalar>(x: T) -> T {
    erfc(-x / T::lit(std::f64::consts::SQRT_2)) / T::lit(2.0)
}

// Acklam's rational approximation (relative error ~1.2e-9).
const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [7.784_695_709_041_462e-3, 3.224_671_290_700_398e-1, 2.445_134_137_142_996, 3.754_408_661_907_416];
const P_LOW: f64 = 0.024_25;

fn horner<T: Scalar>(coeffs: &[f64], x: T) -> T {
    coeffs.iter().fold(T::zero(), |acc, &c| acc * x + T::lit(c))
}

fn acklam<T: Scalar>(p: T) -> T {
    let tail = |q: T| -> T {
        let s = (T::lit(-2.0) * q.ln()).sqrt();
        horner(&C, s) / (horner(&D, s) * s + T::one())
    };
    if p < T::lit(P_LOW) {
        tail(p)
    } else if p <= T::lit(1.0 - P_LOW) {
        let q = p - T::lit(0.5);
        let r = q * q;
        horner(&A, r) * q / (horner(&B, r) * r + T::one())
    } else {
        -tail(T::one() - p)
    }
}

/// Standard normal quantile `z` with `norm_cdf(z) = p`.
///
/// Rational initial guess followed by one Newton step on the CDF.
pub fn inv_norm_cdf<T: Scalar>(p: T) -> Result<T, NormalError> {
    if !(p > T::zero() && p < T::one()) {
        return Err(NormalError::Domain(p.to_f64_lossy()));
    }
    if p == T::lit(0.5) {
        return Ok(T::zero());
    }
    let z = acklam(p);
    let density = norm_pdf(z);
    if density > T::min_positive_value() {
        Ok(z - (norm_cdf(z) - p) / density)
    } else {
        Ok(z)
    }
}
