//! Integer-order Bessel functions of the first kind and the Airy function Ai.

use crate::error::{invalid, Result};

/// `J_n(x)` for integer order.
///
/// Miller's downward recurrence from well above `max(|n|, |x|)`, normalised
/// with `J_0 + 2 sum_m J_2m = 1`.
pub fn bessel_j(n: i32, x: f64) -> Result<f64> {
    if n.abs() > 200 || !x.is_finite() || x.abs() > 200.0 {
        return invalid(format!("bessel_j supports |n| <= 200 and |x| <= 200, got n={n}, x={x}"));
    }
    let order = n.unsigned_abs() as usize;
    // reflections: J_{-n}(x) = (-1)^n J_n(x), J_n(-x) = (-1)^n J_n(x)
    let flips = (n < 0) as usize + (x < 0.0) as usize;
    let sign = if flips * order % 2 == 1 { -1.0 } else { 1.0 };
    Ok(sign * bessel_j_nonneg(order, x.abs()))
}

fn bessel_j_nonneg(n: usize, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let big = n.max(x.ceil() as usize);
    let mut start = big + 40 + (40.0 * big as f64).sqrt() as usize;
    start += start % 2;

    let two_over_x = 2.0 / x;
    let (mut above, mut current) = (0.0f64, 1e-300f64);
    let mut result = 0.0;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        // current holds J_k (unnormalised), above J_{k+1}
        let below = k as f64 * two_over_x * current - above;
        above = current;
        current = below;
        if current.abs() > 1e250 {
            current *= 1e-250;
            above *= 1e-250;
            result *= 1e-250;
            norm *= 1e-250;
        }
        let m = k - 1;
        if m == n {
            result = current;
        }
        if m % 2 == 0 && m > 0 {
            norm += 2.0 * current;
        }
    }
    norm += current;
    result / norm
}

/// Above this the power series loses more to cancellation than the
/// asymptotic expansion does to truncation.
const MACLAURIN_LIMIT: f64 = 6.0;

const AI0: f64 = 0.355_028_053_887_817_24;
const AIP0: f64 = -0.258_819_403_792_806_8;

/// `Ai(x)`.
pub fn airy_ai(x: f64) -> f64 {
    airy_ai_with_derivative(x).0
}

/// `(Ai(x), Ai'(x))`.
///
/// Maclaurin series on `[0, 6]`, the large-argument expansion beyond, and
/// high-order Taylor stepping of `y'' = x y` from the origin for negative
/// arguments, where the equation is oscillatory and stepping is stable.
pub fn airy_ai_with_derivative(x: f64) -> (f64, f64) {
    if x.is_nan() {
        return (f64::NAN, f64::NAN);
    }
    if x >= 0.0 {
        if x <= MACLAURIN_LIMIT {
            maclaurin(x)
        } else {
            asymptotic_positive(x)
        }
    } else {
        taylor_march(0.0, AI0, AIP0, x)
    }
}

fn maclaurin(x: f64) -> (f64, f64) {
    // Ai = c1 f - c2 g with f = sum 3^k (1/3)_k x^{3k}/(3k)!,
    // g = sum 3^k (2/3)_k x^{3k+1}/(3k+1)!
    let x3 = x * x * x;
    let (mut f, mut g) = (1.0, x);
    let (mut fp, mut gp) = (0.0, 1.0);
    let (mut tf, mut tg) = (1.0, x);
    let mut k = 0.0;
    loop {
        // successive term ratios of the two power series
        tf *= x3 / ((3.0 * k + 2.0) * (3.0 * k + 3.0));
        tg *= x3 / ((3.0 * k + 3.0) * (3.0 * k + 4.0));
        f += tf;
        g += tg;
        // derivatives: d/dx x^{3k+3} = (3k+3) x^{3k+2}
        if x != 0.0 {
            fp += tf * (3.0 * k + 3.0) / x;
            gp += tg * (3.0 * k + 4.0) / x;
        }
        k += 1.0;
        if tf.abs() < 1e-18 * f.abs() && tg.abs() < 1e-18 * g.abs().max(1e-300) {
            break;
        }
        if k > 200.0 {
            break;
        }
    }
    (AI0 * f + AIP0 * g, AI0 * fp + AIP0 * gp)
}

fn asymptotic_positive(x: f64) -> (f64, f64) {
    let zeta = 2.0 / 3.0 * x.powf(1.5);
    let mut sum_u = 1.0;
    let mut sum_v = 1.0;
    let mut u = 1.0;
    let mut k = 1.0;
    let mut last = f64::INFINITY;
    loop {
        // u_k = (6k-5)(6k-3)(6k-1) / ((2k-1) 216 k) u_{k-1}, v_k = -(6k+1)/(6k-1) u_k
        u *= (6.0 * k - 5.0) * (6.0 * k - 3.0) * (6.0 * k - 1.0) / ((2.0 * k - 1.0) * 216.0 * k);
        let term = u / zeta.powf(k);
        if term.abs() >= last || term.abs() < 1e-17 {
            break;
        }
        last = term.abs();
        let v = -(6.0 * k + 1.0) / (6.0 * k - 1.0) * term;
        let sgn = if (k as i64) % 2 == 1 { -1.0 } else { 1.0 };
        sum_u += sgn * term;
        sum_v += sgn * v;
        k += 1.0;
    }
    let pre = (-zeta).exp() / (2.0 * std::f64::consts::PI.sqrt());
    (pre * x.powf(-0.25) * sum_u, -pre * x.powf(0.25) * sum_v)
}

/// Enough terms for steps of 0.25 out to |x| ~ 60.
const TAYLOR_TERMS: usize = 56;

/// Integrates `y'' = x y` from `(x0, y0, y0')` to `x1` by local Taylor series.
fn taylor_march(x0: f64, y0: f64, yp0: f64, x1: f64) -> (f64, f64) {
    let span = x1 - x0;
    let steps = (span.abs() / 0.25).ceil().max(1.0) as usize;
    let h = span / steps as f64;
    let (mut a, mut y, mut yp) = (x0, y0, yp0);
    let mut c = [0.0f64; TAYLOR_TERMS];
    for _ in 0..steps {
        // Taylor coefficients about a: c_{k+2} (k+2)(k+1) = a c_k + c_{k-1}
        c[0] = y;
        c[1] = yp;
        c[2] = a * y / 2.0;
        for k in 1..TAYLOR_TERMS - 2 {
            c[k + 2] = (a * c[k] + c[k - 1]) / ((k + 2) as f64 * (k + 1) as f64);
        }
        let order = TAYLOR_TERMS - 1;
        let (mut ny, mut nyp) = (0.0, 0.0);
        for k in (0..=order).rev() {
            ny = ny * h + c[k];
        }
        for k in (1..=order).rev() {
            nyp = nyp * h + k as f64 * c[k];
        }
        y = ny;
        yp = nyp;
        a += h;
    }
    (y, yp)
}

/// `n`-th zero of Ai (negative), `1 <= n <= 50`.
///
/// Seeded by the standard large-`n` expansion and polished by Newton steps
/// kept inside a sign-change bracket.
pub fn airy_zero(n: usize) -> Result<f64> {
    if n == 0 || n > 50 {
        return invalid(format!("airy_zero supports 1 <= n <= 50, got {n}"));
    }
    let t = 3.0 * std::f64::consts::PI * (4.0 * n as f64 - 1.0) / 8.0;
    let t2 = t.powi(-2);
    let seed = -t.powf(2.0 / 3.0)
        * (1.0 + 5.0 / 48.0 * t2 - 5.0 / 36.0 * t2 * t2 + 77125.0 / 82944.0 * t2.powi(3));

    let mut half = 0.05;
    let (mut lo, mut hi) = (seed - half, seed + half);
    while airy_ai(lo).signum() == airy_ai(hi).signum() {
        half *= 1.5;
        lo = seed - half;
        hi = seed + half;
    }
    let mut z = seed;
    for _ in 0..100 {
        let (f, fp) = airy_ai_with_derivative(z);
        if f == 0.0 {
            break;
        }
        if f.signum() == airy_ai(lo).signum() {
            lo = z;
        } else {
            hi = z;
        }
        let mut next = z - f / fp;
        if !(next > lo.min(hi) && next < lo.max(hi)) {
            next = 0.5 * (lo + hi);
        }
        if (next - z).abs() < 1e-15 * z.abs() {
            z = next;
            break;
        }
        z = next;
    }
    Ok(z)
}
