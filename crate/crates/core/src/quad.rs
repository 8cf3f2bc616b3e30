//! Numerical quadrature: adaptive Gauss–Kronrod for smooth integrands and
//! tanh-sinh for integrands with algebraic or logarithmic endpoint
//! singularities.

use alloc::format;
use alloc::vec::Vec;

use crate::error::Error;
use crate::math;

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
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod rule with its embedded 7-point Gauss estimate.
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Globally adaptive Gauss–Kronrod (G7/K15) on `[a, b]`.
///
/// Bisects the interval with the largest error estimate until the total
/// estimate drops below `max(abs_tol, rel_tol * |I|)`.
pub fn adaptive_gk<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64, Error> {
    if a == b {
        return Ok(0.0);
    }
    const MAX_INTERVALS: usize = 4000;
    let (v, e) = gk15(&mut f, a, b);
    let mut parts: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(32);
    parts.push((a, b, v, e));
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Quadrature(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature(format!(
                "no convergence on [{a}, {b}]: estimate {total:e}, error {err:e}"
            )));
        }
        let (worst, _) = parts
            .iter()
            .enumerate()
            .fold((0usize, -1.0f64), |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc });
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            return Err(Error::Quadrature(format!(
                "interval underflow near {lo} while integrating on [{a}, {b}]"
            )));
        }
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// Tanh-sinh (double-exponential) quadrature on `[a, b]`.
///
/// Abscissae near the endpoints are formed from their distance to the
/// endpoint, so integrands singular at `a` or `b` are never evaluated there.
/// Levels are refined until two successive estimates agree to `rel_tol`.
pub fn tanh_sinh<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64, Error> {
    if a == b {
        return Ok(0.0);
    }
    const T_MAX: f64 = 6.1;
    const MAX_LEVEL: u32 = 12;
    let width = b - a;
    let half_pi = 0.5 * core::f64::consts::PI;

    // Contribution of the node at parameter t (weight included).
    let mut node = |t: f64| -> f64 {
        let u = half_pi * math::sinh(t);
        let e = math::exp(-2.0 * u.abs());
        // 1/cosh^2(u) = 4 e^{-2|u|} / (1 + e^{-2|u|})^2
        let sech2 = 4.0 * e / ((1.0 + e) * (1.0 + e));
        let w = 0.5 * width * half_pi * math::cosh(t) * sech2;
        if w == 0.0 {
            return 0.0;
        }
        // distance from the nearer endpoint: width / (1 + e^{2|u|})
        let d = width * e / (1.0 + e);
        if d == 0.0 {
            return 0.0;
        }
        let x = if t < 0.0 { a + d } else if t > 0.0 { b - d } else { a + 0.5 * width };
        if x <= a || x >= b {
            return 0.0;
        }
        let v = f(x);
        // an integrand that overflows this close to an endpoint has an
        // integrable singularity there whose omitted piece is negligible
        if !v.is_finite() && d < width * 1e-100 {
            return 0.0;
        }
        w * v
    };

    let mut h = 1.0;
    let mut sum = node(0.0);
    let mut k = 1;
    while (k as f64) * h <= T_MAX {
        let t = k as f64 * h;
        sum += node(t) + node(-t);
        k += 1;
    }
    let mut estimate = sum * h;
    for _level in 1..=MAX_LEVEL {
        h *= 0.5;
        let mut k = 1;
        while (k as f64) * h <= T_MAX {
            let t = k as f64 * h;
            sum += node(t) + node(-t);
            k += 2;
        }
        let next = sum * h;
        if !next.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand on [{a}, {b}]")));
        }
        let diff = (next - estimate).abs();
        estimate = next;
        if diff <= rel_tol * next.abs() || (next == 0.0 && diff == 0.0) {
            return Ok(next);
        }
    }
    Err(Error::Quadrature(format!(
        "tanh-sinh did not converge on [{a}, {b}] (estimate {estimate:e})"
    )))
}

/// Exp-sinh quadrature on `[a, ∞)` for integrands that decay at infinity,
/// possibly slowly, and may be singular at `a`.
pub fn exp_sinh<F: FnMut(f64) -> f64>(mut f: F, a: f64, rel_tol: f64) -> Result<f64, Error> {
    const T_MAX: f64 = 6.5;
    const MAX_LEVEL: u32 = 12;
    let half_pi = 0.5 * core::f64::consts::PI;

    let mut node = |t: f64| -> f64 {
        let u = half_pi * math::sinh(t);
        let d = math::exp(u);
        if d == 0.0 || !d.is_finite() {
            return 0.0;
        }
        let w = half_pi * math::cosh(t) * d;
        let x = a + d;
        if !(x > a) || !x.is_finite() || !w.is_finite() {
            return 0.0;
        }
        let v = f(x);
        if !v.is_finite() {
            return 0.0;
        }
        w * v
    };

    let mut h = 1.0;
    let mut sum = node(0.0);
    let mut k = 1;
    while (k as f64) * h <= T_MAX {
        let t = k as f64 * h;
        sum += node(t) + node(-t);
        k += 1;
    }
    let mut estimate = sum * h;
    for _level in 1..=MAX_LEVEL {
        h *= 0.5;
        let mut k = 1;
        while (k as f64) * h <= T_MAX {
            let t = k as f64 * h;
            sum += node(t) + node(-t);
            k += 2;
        }
        let next = sum * h;
        if !next.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand on [{a}, inf)")));
        }
        let diff = (next - estimate).abs();
        estimate = next;
        if diff <= rel_tol * next.abs() || (next == 0.0 && diff == 0.0) {
            return Ok(next);
        }
    }
    Err(Error::Quadrature(format!(
        "exp-sinh did not converge on [{a}, inf) (estimate {estimate:e})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_sinh_slow_decay_and_endpoint_singularity() {
        for c in [1e-4, 0.038, 1.0, 7.5] {
            let v = exp_sinh(|s: f64| (-c * s).exp(), 0.0, 1e-13).unwrap();
            assert!((v * c - 1.0).abs() < 1e-11, "c={c} v={v}");
        }
        // Γ(1/2) = √π, singular at the origin
        let v = exp_sinh(|x: f64| (-x).exp() / x.sqrt(), 0.0, 1e-13).unwrap();
        assert!((v - core::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gk_polynomial_and_exponential() {
        let v = adaptive_gk(|x| x * x, 0.0, 3.0, 1e-14, 0.0).unwrap();
        assert!((v - 9.0).abs() < 1e-13);
        let v = adaptive_gk(|x: f64| (-x).exp(), 0.0, 50.0, 1e-13, 0.0).unwrap();
        assert!((v - (1.0 - (-50.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn gk_zero_integrand() {
        assert_eq!(adaptive_gk(|_| 0.0, 1.0, 2.0, 1e-10, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn tanh_sinh_endpoint_singularities() {
        // ∫_0^1 z^s dz = 1/(s+1)
        for &s in &[-0.95, -0.5, 0.0, 0.7, 3.0] {
            let v = tanh_sinh(|z: f64| z.powf(s), 0.0, 1.0, 1e-13).unwrap();
            let exact = 1.0 / (s + 1.0);
            assert!(((v - exact) / exact).abs() < 1e-11, "s={s}: {v} vs {exact}");
        }
        // ∫_0^1 z |ln z| dz = 1/4
        let v = tanh_sinh(|z: f64| -z * z.ln(), 0.0, 1.0, 1e-13).unwrap();
        assert!((v - 0.25).abs() < 1e-13);
    }
}
