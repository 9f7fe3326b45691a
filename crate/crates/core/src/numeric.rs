//! Shared numeric routines: adaptive quadrature, one-dimensional searches,
//! and the log-gamma / regularized incomplete beta pair backing the Beta
//! prior family.

use crate::scalar::{fl, fu, Scalar};

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<T: Scalar, F: Fn(T) -> T>(f: &F, a: T, b: T, tol: T) -> T {
    if a == b {
        return T::zero();
    }
    let m = (a + b) * fl(0.5);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(a, b, fa, fm, fb);
    simpson_step(f, a, fa, m, fm, b, fb, whole, tol, 50)
}

/// Quadrature over `[a, b]` split at the interior points of `kinks`.
///
/// Useful when the integrand is piecewise smooth; each smooth piece is
/// integrated separately so the adaptive rule is not confused by corners.
pub fn integrate_with_kinks<T: Scalar, F: Fn(T) -> T>(
    f: &F,
    a: T,
    b: T,
    kinks: &[T],
    tol: T,
) -> T {
    let mut cuts: Vec<T> = kinks.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let mut lo = a;
    let mut total = T::zero();
    let pieces = fu::<T>(cuts.len() + 1);
    for &cut in cuts.iter().chain(std::iter::once(&b)) {
        total = total + adaptive_simpson(f, lo, cut, tol / pieces);
        lo = cut;
    }
    total
}

fn simpson<T: Scalar>(a: T, b: T, fa: T, fm: T, fb: T) -> T {
    (b - a) / fl(6.0) * (fa + fl::<T>(4.0) * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<T: Scalar, F: Fn(T) -> T>(
    f: &F,
    a: T,
    fa: T,
    m: T,
    fm: T,
    b: T,
    fb: T,
    whole: T,
    tol: T,
    depth: u32,
) -> T {
    let lm = (a + m) * fl(0.5);
    let rm = (m + b) * fl(0.5);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= fl::<T>(15.0) * tol {
        left + right + delta / fl(15.0)
    } else {
        let half = tol * fl(0.5);
        simpson_step(f, a, fa, lm, flm, m, fm, left, half, depth - 1)
            + simpson_step(f, m, fm, rm, frm, b, fb, right, half, depth - 1)
    }
}

/// Golden-section maximization of a unimodal `f` on `[lo, hi]`.
///
/// Returns `(argmax, max)` once the bracket width falls below `width`.
/// Deterministic: no randomness, fixed iteration order.
pub fn golden_max<T: Scalar, F: Fn(T) -> T>(f: &F, mut lo: T, mut hi: T, width: T) -> (T, T) {
    let inv_phi: T = fl(0.618_033_988_749_894_9);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > width {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let mid = (lo + hi) * fl(0.5);
    let fm = f(mid);
    if fm >= f1 && fm >= f2 {
        (mid, fm)
    } else if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Golden-section minimization; mirror of [`golden_max`].
pub fn golden_min<T: Scalar, F: Fn(T) -> T>(f: &F, lo: T, hi: T, width: T) -> (T, T) {
    let (x, v) = golden_max(&|x| -f(x), lo, hi, width);
    (x, -v)
}

/// Smallest `x` in `[lo, hi]` with `pred(x)` true, for a monotone predicate
/// (false below the threshold, true above). `pred(hi)` must hold.
pub fn bisect_smallest_true<T: Scalar, F: Fn(T) -> bool>(pred: &F, mut lo: T, mut hi: T, tol: T) -> T {
    debug_assert!(pred(hi));
    while hi - lo > tol {
        let mid = (lo + hi) * fl(0.5);
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Harmonic number 1 + 1/2 + ... + 1/n.
///
/// Direct summation up to 10^7 terms, the Euler-Maclaurin tail beyond that
/// (error well below 1e-12 there).
pub fn harmonic<T: Scalar>(n: u64) -> T {
    if n == 0 {
        return T::zero();
    }
    if n <= 10_000_000 {
        let mut acc = 0.0f64;
        // summed small-to-large to limit rounding
        for j in (1..=n).rev() {
            acc += 1.0 / j as f64;
        }
        fl(acc)
    } else {
        const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
        let x = n as f64;
        fl(x.ln() + EULER_GAMMA + 1.0 / (2.0 * x) - 1.0 / (12.0 * x * x))
    }
}

/// Natural log of the gamma function for positive arguments (Lanczos, g = 7).
pub fn ln_gamma<T: Scalar>(mut x: T) -> T {
    const COEFFS: [f64; 8] = [
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    debug_assert!(x > T::zero());
    // Shift small arguments up; ln Γ(x) = ln Γ(x+1) − ln x.
    let mut shift = T::zero();
    while x < fl(0.5) {
        shift = shift - x.ln();
        x = x + T::one();
    }
    let xm1 = x - T::one();
    let mut sum: T = fl(0.999_999_999_999_809_93);
    for (i, &c) in COEFFS.iter().enumerate() {
        sum = sum + fl::<T>(c) / (xm1 + fu(i + 1));
    }
    let t = xm1 + fl(7.5);
    let half_ln_two_pi: T = fl(0.918_938_533_204_672_7);
    shift + half_ln_two_pi + (xm1 + fl(0.5)) * t.ln() - t + sum.ln()
}

/// Regularized incomplete beta function I_x(a, b) via Lentz's continued
/// fraction, with the usual symmetry switch for fast convergence.
pub fn reg_inc_beta<T: Scalar>(a: T, b: T, x: T) -> T {
    debug_assert!(a > T::zero() && b > T::zero());
    if x <= T::zero() {
        return T::zero();
    }
    if x >= T::one() {
        return T::one();
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (T::one() - x).ln();
    let front = ln_front.exp();
    if x < (a + T::one()) / (a + b + fl(2.0)) {
        front * beta_cf(a, b, x) / a
    } else {
        T::one() - front * beta_cf(b, a, T::one() - x) / b
    }
}

fn beta_cf<T: Scalar>(a: T, b: T, x: T) -> T {
    let tiny: T = fl(1e-30);
    let eps = T::epsilon() * fl(8.0);
    let qab = a + b;
    let qap = a + T::one();
    let qam = a - T::one();
    let mut c = T::one();
    let mut d = T::one() - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = T::one() / d;
    let mut h = d;
    for m in 1..300 {
        let mf: T = fu(m);
        let two_m = mf + mf;
        let aa = mf * (b - mf) * x / ((qam + two_m) * (a + two_m));
        d = T::one() + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = T::one() + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = T::one() / d;
        h = h * d * c;
        let aa = -(a + mf) * (qab + mf) * x / ((a + two_m) * (qap + two_m));
        d = T::one() + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = T::one() + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = T::one() / d;
        let del = d * c;
        h = h * del;
        if (del - T::one()).abs() < eps {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_exact() {
        let v = adaptive_simpson(&|x: f64| 3.0 * x * x, 0.0, 1.0, 1e-12);
        assert!((v - 1.0).abs() < 1e-11);
    }

    #[test]
    fn simpson_kinked_integrand() {
        // |x - 0.3| over [0,1] = 0.3^2/2 + 0.7^2/2
        let f = |x: f64| (x - 0.3f64).abs();
        let v = integrate_with_kinks(&f, 0.0, 1.0, &[0.3], 1e-12);
        assert!((v - (0.045 + 0.245)).abs() < 1e-10);
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, v) = golden_max(&|x: f64| -(x - 0.37) * (x - 0.37), 0.0, 1.0, 1e-10);
        assert!((x - 0.37).abs() < 1e-7);
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn harmonic_small_and_large() {
        assert!((harmonic::<f64>(1) - 1.0).abs() < 1e-15);
        assert!((harmonic::<f64>(4) - (1.0 + 0.5 + 1.0 / 3.0 + 0.25)).abs() < 1e-14);
        // cross the summation/asymptotic boundary; the two routes must agree
        let direct = harmonic::<f64>(10_000_000);
        let tail = {
            let x = 10_000_000f64;
            x.ln() + 0.577_215_664_901_532_9 + 1.0 / (2.0 * x) - 1.0 / (12.0 * x * x)
        };
        assert!((direct - tail).abs() < 1e-10);
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0f64)).abs() < 1e-12);
        assert!((ln_gamma(2.0f64)).abs() < 1e-12);
        assert!((ln_gamma(5.0f64) - 24f64.ln()).abs() < 1e-11);
        // Γ(1/2) = sqrt(pi)
        assert!((ln_gamma(0.5f64) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-11);
    }

    #[test]
    fn inc_beta_matches_closed_forms() {
        // I_x(1,1) = x
        assert!((reg_inc_beta(1.0f64, 1.0, 0.42) - 0.42).abs() < 1e-12);
        // I_x(2,2) = x^2 (3 - 2x)
        let x = 0.7f64;
        assert!((reg_inc_beta(2.0f64, 2.0, x) - x * x * (3.0 - 2.0 * x)).abs() < 1e-12);
        // I_x(8,1) = x^8
        assert!((reg_inc_beta(8.0f64, 1.0, 0.9) - 0.9f64.powi(8)).abs() < 1e-12);
    }

    #[test]
    fn bisect_threshold() {
        let t = bisect_smallest_true(&|x: f64| x >= 0.625, 0.0, 1.0, 1e-12);
        assert!((t - 0.625).abs() < 1e-11);
    }
}
