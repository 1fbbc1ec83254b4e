//! Closed-form results in the strong- and weak-confinement limits.
//!
//! These are oracles for the numerics, not replacements: each function is
//! exact only in the regime named by its [`Regime`] tag.

use crate::error::{invalid, Result};
use crate::linalg::{airy_zero, bessel_j};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    LargeH,
    SmallH,
    Exact,
}

/// A closed-form value tagged with where it can be trusted.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LimitPrediction {
    pub quantity: String,
    pub value: f64,
    pub regime: Regime,
}

impl LimitPrediction {
    fn new(quantity: impl Into<String>, value: f64, regime: Regime) -> Self {
        Self { quantity: quantity.into(), value, regime }
    }
}

/// Wannier–Stark level `2 h n`, exact as `h/J -> infinity`.
pub fn quantized_energy_large_h(n: usize, h: f64) -> Result<f64> {
    if n == 0 {
        return invalid("levels start at n = 1");
    }
    Ok(2.0 * h * n as f64)
}

/// Continuum-limit energy `-2 z_n (J h^2 cos(k/2))^(1/3)`.
pub fn airy_energy(n: usize, k: f64, h: f64, j: f64) -> Result<f64> {
    let ck = (k / 2.0).cos();
    if ck <= f64::EPSILON {
        return invalid(format!("cos(k/2) = {ck} is not positive; continuum scaling undefined"));
    }
    if h <= 0.0 || j <= 0.0 {
        return invalid("airy_energy needs h > 0 and J > 0");
    }
    let z = airy_zero(n)?;
    Ok(-2.0 * z * (j * h * h * ck).cbrt())
}

/// Energy of the tilted-link initial state: kinetic `J sin(theta)` plus
/// string energy `2h sin^2(theta/2) + 2h`.
pub fn theta_energy(theta: f64, h: f64, j: f64) -> f64 {
    j * theta.sin() + 2.0 * h * (theta / 2.0).sin().powi(2) + 2.0 * h
}

/// Inverts [`theta_energy`] on the rising branch `[0, theta_max]`, where
/// `theta_max` maximises the energy.
pub fn theta_for_energy(energy: f64, h: f64, j: f64) -> Result<f64> {
    // dE/dtheta = J cos(theta) + h sin(theta) vanishes at theta_max
    let theta_max = std::f64::consts::PI - (j / h).atan();
    let (mut lo, mut hi) = (0.0, theta_max);
    let (e_lo, e_hi) = (theta_energy(lo, h, j), theta_energy(hi, h, j));
    if energy < e_lo || energy > e_hi {
        return invalid(format!("energy {energy} outside [{e_lo}, {e_hi}]"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if theta_energy(mid, h, j) < energy {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Breathing amplitude `sqrt(2) (J/h) |sin(h t)|` for a meson started away
/// from the hard wall.
pub fn breathing_amplitude(t: f64, h: f64, j: f64) -> Result<f64> {
    if h <= 0.0 {
        return invalid("breathing_amplitude needs h > 0");
    }
    Ok(std::f64::consts::SQRT_2 * j / h * (h * t).sin().abs())
}

/// Angular frequency of the breathing oscillation.
pub fn breathing_frequency(h: f64) -> f64 {
    2.0 * h
}

/// Mean size of an `r = 1` meson for `h >> J`:
/// `1 + J^2/(2h^2) + J^2 sin^2(h t)/(2h^2)`.
pub fn ravg_large_h(t: f64, h: f64, j: f64) -> Result<f64> {
    if h <= 0.0 {
        return invalid("ravg_large_h needs h > 0");
    }
    let a = j * j / (2.0 * h * h);
    Ok(1.0 + a + a * (h * t).sin().powi(2))
}

/// Time average of [`ravg_large_h`], `1 + 3 J^2 / (4 h^2)`.
pub fn ravg_large_h_mean(h: f64, j: f64) -> f64 {
    1.0 + 0.75 * j * j / (h * h)
}

/// Half the peak-to-peak swing of [`ravg_large_h`], `J^2 / (4 h^2)`.
pub fn ravg_large_h_amplitude(h: f64, j: f64) -> f64 {
    0.25 * j * j / (h * h)
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// `ln |H_2n|` with `|H_2n| = J (J/2h)^(2n-1) n / (n!)^2`.
pub fn hopping_matrix_element_ln(n: usize, h: f64, j: f64) -> Result<f64> {
    if n == 0 || n > 150 {
        return invalid(format!("meson length must be in 1..=150, got {n}"));
    }
    if h <= 0.0 || j <= 0.0 {
        return invalid("hopping matrix element needs h > 0 and J > 0");
    }
    Ok(j.ln() + (2 * n - 1) as f64 * (j / (2.0 * h)).ln() + (n as f64).ln() - 2.0 * ln_factorial(n))
}

/// Magnitude of the leading `2n`-th order amplitude that translates a
/// length-`n` meson. May underflow to zero for long mesons; use
/// [`hopping_matrix_element_ln`] there.
pub fn hopping_matrix_element(n: usize, h: f64, j: f64) -> Result<f64> {
    hopping_matrix_element_ln(n, h, j).map(f64::exp)
}

/// Peak of `|H_2n|` in `n`.
///
/// `quoted` is the published estimate `J / (h e)`, obtained from
/// `exp(2n (ln(J/h) - ln n))`. Applying Stirling to the closed form itself
/// keeps the factor of two and gives `stirling = J / (2h)`, which is what the
/// exact `argmax` tracks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakLength {
    pub quoted: f64,
    pub stirling: f64,
    pub argmax: usize,
}

pub fn peak_meson_length(h: f64, j: f64) -> Result<PeakLength> {
    if h <= 0.0 || j <= 0.0 {
        return invalid("peak_meson_length needs h > 0 and J > 0");
    }
    let mut best = (1, hopping_matrix_element_ln(1, h, j)?);
    for n in 2..=150 {
        let v = hopping_matrix_element_ln(n, h, j)?;
        if v > best.1 {
            best = (n, v);
        }
    }
    Ok(PeakLength {
        quoted: j / (h * std::f64::consts::E),
        stirling: j / (2.0 * h),
        argmax: best.0,
    })
}

/// Infinite-chain Wannier–Stark eigenvector `gamma_r = J_{r-n}(2 J cos(k/2) / h)`
/// on `r = 1..=r_max`, normalised to unit length.
pub fn bessel_limit_eigenvector(n: usize, k: f64, h: f64, j: f64, r_max: usize) -> Result<Vec<f64>> {
    if h <= 0.0 {
        return invalid("bessel_limit_eigenvector needs h > 0");
    }
    if n == 0 || r_max == 0 {
        return invalid("need n >= 1 and r_max >= 1");
    }
    let x = 2.0 * j * (k / 2.0).cos() / h;
    let mut v = (1..=r_max)
        .map(|r| bessel_j(r as i32 - n as i32, x))
        .collect::<Result<Vec<_>>>()?;
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    for a in &mut v {
        *a /= norm;
    }
    Ok(v)
}

/// Convenience bundle of tagged predictions for reporting.
pub fn predictions(h: f64, j: f64) -> Result<Vec<LimitPrediction>> {
    let mut out = Vec::new();
    for n in 1..=3 {
        out.push(LimitPrediction::new(format!("E_{n} (k=0)"), quantized_energy_large_h(n, h)?, Regime::LargeH));
        out.push(LimitPrediction::new(format!("E_{n} (k=0)"), airy_energy(n, 0.0, h, j)?, Regime::SmallH));
    }
    out.push(LimitPrediction::new("omega", breathing_frequency(h), Regime::LargeH));
    out.push(LimitPrediction::new("r_avg time mean", ravg_large_h_mean(h, j), Regime::LargeH));
    out.push(LimitPrediction::new("n_p", peak_meson_length(h, j)?.quoted, Regime::SmallH));
    out.push(LimitPrediction::new("E(theta=0)", theta_energy(0.0, h, j), Regime::Exact));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::build_momentum_block;
    use crate::linalg::{eig_tridiagonal, eigenvalues_tridiagonal};
    use std::f64::consts::PI;

    #[test]
    fn quantized_levels() {
        assert_eq!(quantized_energy_large_h(1, 1.0).unwrap(), 2.0);
        assert_eq!(quantized_energy_large_h(3, 2.0).unwrap(), 12.0);
        assert!(quantized_energy_large_h(0, 1.0).is_err());
        let (j, h) = (1.0, 100.0);
        let ev = eigenvalues_tridiagonal(&build_momentum_block(0.0, j, h, 50).unwrap()).unwrap();
        assert!((ev[1] - quantized_energy_large_h(2, h).unwrap()).abs() < 1e-3 * j);
    }

    #[test]
    fn airy_energy_values() {
        let e = airy_energy(1, 0.0, 1.0, 1.0).unwrap();
        assert!((e - 4.67622).abs() < 1e-4);
        for n in 1..=4 {
            let e0 = airy_energy(n, 0.0, 0.3, 1.0).unwrap();
            for &k in &[0.5, 1.7, 3.0] {
                let ek = airy_energy(n, k, 0.3, 1.0).unwrap();
                assert!((ek / e0 - (k / 2.0f64).cos().cbrt()).abs() < 1e-12);
            }
        }
        assert!(airy_energy(1, PI, 1.0, 1.0).is_err());
        assert!(airy_energy(1, 4.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn airy_energies_increase() {
        let v: Vec<f64> = (1..=10).map(|n| airy_energy(n, 0.4, 0.2, 1.0).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn airy_energy_matches_weak_field_block() {
        let (j, h) = (1.0, 0.01);
        let blk = build_momentum_block(0.0, j, h, 600).unwrap();
        let ev = eigenvalues_tridiagonal(&blk).unwrap();
        // the band bottom sits at -2 * (2J cos(k/2)); the continuum limit
        // measures energies from there
        for n in 1..=3 {
            let predicted = airy_energy(n, 0.0, h, j).unwrap();
            let numeric = ev[n - 1] + 4.0 * j;
            assert!((numeric / predicted - 1.0).abs() < 0.02, "n={n}: {numeric} vs {predicted}");
        }
    }

    #[test]
    fn theta_energy_values() {
        assert!((theta_energy(0.0, 1.1, 1.0) - 2.2).abs() < 1e-15);
        assert!((theta_energy(3.0 * PI / 4.0, 1.1, 1.0) - 4.78).abs() < 5e-3);
        assert!((theta_energy(3.0 * PI / 8.0, 1.1, 1.0) - 3.80).abs() < 5e-3);
        assert!((theta_energy(PI / 8.0, 1.1, 1.0) - 2.67).abs() < 5e-3);
    }

    #[test]
    fn theta_inversion() {
        for &theta in &[PI / 8.0, 3.0 * PI / 8.0, 3.0 * PI / 4.0] {
            let e = theta_energy(theta, 1.1, 1.0);
            assert!((theta_for_energy(e, 1.1, 1.0).unwrap() - theta).abs() < 1e-12);
        }
        assert!(theta_for_energy(1.0, 1.1, 1.0).is_err());
    }

    #[test]
    fn breathing() {
        let (h, j) = (2.0, 1.0);
        assert_eq!(breathing_amplitude(0.0, h, j).unwrap(), 0.0);
        let peak = breathing_amplitude(PI / (2.0 * h), h, j).unwrap();
        assert!((peak - 2f64.sqrt() * j / h).abs() < 1e-15);
        // |sin(h t)| repeats every pi / h, i.e. angular frequency 2h
        let period = PI / h;
        for k in 0..10 {
            let t = 0.137 * k as f64;
            let a = breathing_amplitude(t, h, j).unwrap();
            let b = breathing_amplitude(t + period, h, j).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
        assert!((2.0 * PI / period - breathing_frequency(h)).abs() < 1e-15);
        assert!(breathing_amplitude(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn ravg_formula() {
        let (h, j) = (5.0, 1.0);
        assert!((ravg_large_h(0.0, h, j).unwrap() - (1.0 + j * j / (2.0 * h * h))).abs() < 1e-15);
        // trapezoidal mean over one period of sin^2
        let period = PI / h;
        let m = 1000;
        let mean: f64 = (0..m)
            .map(|k| ravg_large_h(period * k as f64 / m as f64, h, j).unwrap())
            .sum::<f64>()
            / m as f64;
        assert!((mean - ravg_large_h_mean(h, j)).abs() < 1e-12);
        assert!((ravg_large_h_mean(h, j) - (1.0 + 3.0 / 100.0)).abs() < 1e-15);
    }

    /// `J^{2n} / (2h * 4h * ... * 2nh * ... * 4h * 2h)` multiplied out.
    fn explicit_product(n: usize, h: f64, j: f64) -> f64 {
        let mut denom = 1.0;
        for k in 1..=n {
            denom *= 2.0 * h * k as f64;
        }
        for k in 1..n {
            denom *= 2.0 * h * k as f64;
        }
        j.powi(2 * n as i32) / denom
    }

    #[test]
    fn hopping_element_closed_form() {
        let (h, j) = (0.7, 1.3);
        assert!((hopping_matrix_element(1, h, j).unwrap() - j * j / (2.0 * h)).abs() < 1e-15);
        let n2 = hopping_matrix_element(2, h, j).unwrap();
        assert!((n2 / (j.powi(4) / (16.0 * h.powi(3))) - 1.0).abs() < 1e-13);
        for n in 1..=10 {
            for &hh in &[0.05, 0.3, 1.1, 4.0] {
                let a = hopping_matrix_element(n, hh, j).unwrap();
                let b = explicit_product(n, hh, j);
                assert!((a / b - 1.0).abs() < 1e-12, "n={n}, h={hh}");
            }
        }
        assert!(hopping_matrix_element(0, h, j).is_err());
        assert!(hopping_matrix_element(151, h, j).is_err());
        assert!(hopping_matrix_element_ln(150, 0.01, 1.0).unwrap().is_finite());
    }

    #[test]
    fn peak_length() {
        let p = peak_meson_length(0.1, 1.0).unwrap();
        assert!((p.quoted - 3.678_794_4).abs() < 1e-6);
        // ratio H_{2n+2}/H_{2n} = (J/2h)^2 / (n (n+1)) crosses one between 4 and 5
        assert_eq!(p.argmax, 5);
        let p = peak_meson_length(1.1, 1.0).unwrap();
        assert!(p.quoted < 1.0 && p.stirling < 1.0);
        assert_eq!(p.argmax, 1);
    }

    #[test]
    fn stirling_and_exact_argmax_agree() {
        for &h in &[0.05, 0.1, 0.3] {
            let p = peak_meson_length(h, 1.0).unwrap();
            // integer maximiser of the Stirling form 2n (ln(J/2h) - ln n + 1)
            let stirling_argmax = (1..=150)
                .max_by(|&a, &b| {
                    let f = |n: usize| 2.0 * n as f64 * ((0.5 / h).ln() - (n as f64).ln() + 1.0);
                    f(a).total_cmp(&f(b))
                })
                .unwrap();
            assert!(p.argmax.abs_diff(stirling_argmax) <= 1, "h={h}");
            assert!((p.argmax as f64 - p.stirling).abs() <= 1.0, "h={h}");
        }
    }

    #[test]
    fn decreasing_beyond_peak() {
        for &h in &[0.05, 0.1, 0.3, 0.5, 1.1, 3.0] {
            let p = peak_meson_length(h, 1.0).unwrap();
            let start = p.stirling.floor() as usize + 1;
            for n in start..150 {
                let a = hopping_matrix_element_ln(n, h, 1.0).unwrap();
                let b = hopping_matrix_element_ln(n + 1, h, 1.0).unwrap();
                assert!(b < a, "h={h}, n={n}");
            }
        }
    }

    #[test]
    fn bessel_profile_limits() {
        let v = bessel_limit_eigenvector(3, PI, 1.0, 1.0, 10).unwrap();
        for (i, &a) in v.iter().enumerate() {
            let expected = if i == 2 { 1.0 } else { 0.0 };
            assert!((a - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn bessel_profile_matches_strong_field_block() {
        let (j, h, k, n) = (1.0, 50.0, 0.0, 3);
        let r_max = 30;
        let analytic = bessel_limit_eigenvector(n, k, h, j, r_max).unwrap();
        let spec = eig_tridiagonal(&build_momentum_block(k, j, h, r_max).unwrap()).unwrap();
        let numeric = spec.eigenvector(n - 1);
        let overlap: f64 = analytic.iter().zip(numeric).map(|(a, b)| a * b).sum();
        assert!(overlap.abs() >= 0.999);

        // the next-nearest tail follows the hopping 2J cos(k/2) over the
        // level spacing 2h * 2
        let ratio = (analytic[n + 1] / analytic[n]).abs();
        let expected = 2.0 * j * (k / 2.0f64).cos() / (2.0 * h * 2.0);
        assert!((ratio / expected - 1.0).abs() < 0.3, "{ratio} vs {expected}");
    }

    #[test]
    fn prediction_bundle_tags() {
        let p = predictions(1.1, 1.0).unwrap();
        assert!(p.iter().all(|x| x.value.is_finite()));
        assert!(p.iter().any(|x| x.regime == Regime::Exact));
    }
}
