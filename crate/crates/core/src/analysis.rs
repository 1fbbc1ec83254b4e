//! Derived quantities from an [`ObservableSeries`]: long-time meson size,
//! breathing frequency, propagation speed and size filtering.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::dynamics::{ObservableSeries, OccupationGrid};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_TRANSIENT: f64 = 10.0;
pub const DEFAULT_WINDOW_END: f64 = 60.0;
pub const MIN_WINDOW_SAMPLES: usize = 50;
pub const MIN_FFT_SAMPLES: usize = 128;
pub const DEFAULT_PADDING: usize = 8;
pub const PROMINENCE_RATIO: f64 = 3.0;
pub const LOW_CONFIDENCE_R2: f64 = 0.95;
pub const FRONT_THRESHOLD: f64 = 1e-2;
pub const MIN_SIZE_PROBABILITY: f64 = 1e-6;

/// Closed time interval used for averaging and fitting. Samples flagged by
/// the reflection guard are always dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalysisWindow {
    pub t_start: f64,
    pub t_end: f64,
    /// True when `t_end` was pulled in by the reflection guard.
    pub clipped_by_reflection: bool,
}

impl AnalysisWindow {
    pub fn new(t_start: f64, t_end: f64) -> Result<Self> {
        if !(t_start >= 0.0 && t_end > t_start && t_end.is_finite()) {
            return invalid(format!("need 0 <= t_start < t_end, got [{t_start}, {t_end}]"));
        }
        Ok(Self { t_start, t_end, clipped_by_reflection: false })
    }

    /// `[10, min(60, first reflection)]`.
    pub fn default_for(series: &ObservableSeries) -> Result<Self> {
        Self::new(DEFAULT_TRANSIENT, DEFAULT_WINDOW_END)?.guarded(series)
    }

    /// Pulls `t_end` back to just before the first reflection-flagged sample.
    pub fn guarded(self, series: &ObservableSeries) -> Result<Self> {
        let Some(idx) = series.reflection_flag.iter().position(|&f| f) else {
            return Ok(self);
        };
        if idx == 0 {
            return invalid("reflection guard tripped at the first sample");
        }
        let last_clean = series.times[idx - 1];
        if last_clean >= self.t_end {
            return Ok(self);
        }
        if last_clean <= self.t_start {
            return invalid(format!(
                "reflection at Jt = {} precedes window start {}",
                series.times[idx], self.t_start
            ));
        }
        Ok(Self { t_end: last_clean, clipped_by_reflection: true, ..self })
    }

    /// Indices of unflagged samples inside the window.
    pub fn indices(&self, series: &ObservableSeries) -> Vec<usize> {
        let eps = 1e-9 * self.t_end.max(1.0);
        series
            .times
            .iter()
            .enumerate()
            .filter(|&(i, &t)| {
                t >= self.t_start - eps
                    && t <= self.t_end + eps
                    && !series.reflection_flag.get(i).copied().unwrap_or(false)
            })
            .map(|(i, _)| i)
            .collect()
    }
}

fn select(values: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| values[i]).collect()
}

fn window_samples(series: &ObservableSeries, window: &AnalysisWindow, min: usize) -> Result<Vec<usize>> {
    let idx = window.indices(series);
    if idx.len() < min {
        return invalid(format!(
            "window [{}, {}] holds {} usable samples, need {min}",
            window.t_start,
            window.t_end,
            idx.len()
        ));
    }
    Ok(idx)
}

/// Mean of `r_avg` over the window.
pub fn long_time_average(series: &ObservableSeries, window: &AnalysisWindow) -> Result<f64> {
    let idx = window_samples(series, window, MIN_WINDOW_SAMPLES)?;
    Ok(idx.iter().map(|&i| series.r_avg[i]).sum::<f64>() / idx.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrequencyPeak {
    /// Angular frequency in units of `J`.
    pub omega: f64,
    /// Peak magnitude over the median magnitude.
    pub prominence: f64,
}

/// Dominant angular frequency of `r_avg(t)` over the window.
pub fn dominant_frequency(series: &ObservableSeries, window: &AnalysisWindow) -> Result<FrequencyPeak> {
    let idx = window_samples(series, window, MIN_FFT_SAMPLES)?;
    let times = select(&series.times, &idx);
    let values = select(&series.r_avg, &idx);
    spectral_peak(&times, &values, DEFAULT_PADDING)
}

/// Peak search on a uniformly sampled signal. Bins closer to zero frequency
/// than one unpadded bin are skipped.
pub fn spectral_peak(times: &[f64], values: &[f64], padding: usize) -> Result<FrequencyPeak> {
    let n = values.len();
    if n < 4 || times.len() != n {
        return invalid("spectral_peak needs at least four paired samples");
    }
    if padding == 0 {
        return invalid("padding factor must be positive");
    }
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(dt > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return invalid("time grid in window is not uniform");
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let m = n * padding;
    let mut buf = vec![Complex::new(0.0, 0.0); m];
    for (k, &v) in values.iter().enumerate() {
        let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos();
        buf[k] = Complex::new((v - mean) * hann, 0.0);
    }
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let half = m / 2;
    let mag: Vec<f64> = buf[..=half].iter().map(|c| c.norm()).collect();

    let first = padding + 1;
    let (peak, &peak_mag) = mag[first..half]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i + first, v))
        .ok_or_else(|| Error::NoOscillation("window too short for a spectrum".into()))?;

    let mut sorted = mag[1..=half].to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let prominence = if median > 0.0 { peak_mag / median } else { f64::INFINITY };
    // roundoff left behind by mean subtraction of a constant signal
    let floor = 1e-12 * n as f64 * mean.abs().max(1.0);
    if !(peak_mag > floor) || prominence < PROMINENCE_RATIO {
        return Err(Error::NoOscillation(format!(
            "largest peak is {prominence:.2} times the median magnitude"
        )));
    }

    let (a, b, c) = (mag[peak - 1], mag[peak], mag[peak + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom != 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    let omega = 2.0 * std::f64::consts::PI * (peak as f64 + shift) / (m as f64 * dt);
    Ok(FrequencyPeak { omega, prominence })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

fn r_squared(x: &[f64], y: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(&a, &b)| (b - f(a)).powi(2)).sum();
    if ss_tot == 0.0 {
        if ss_res == 0.0 { 1.0 } else { 0.0 }
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return invalid("linear fit needs at least two paired points");
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return invalid("linear fit needs distinct abscissae");
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    Ok(LinearFit { slope, intercept, r_squared: r_squared(x, y, |v| slope * v + intercept) })
}

/// Least squares `y = slope x` with the intercept pinned at zero.
pub fn fit_through_origin(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n < 1 || y.len() != n {
        return invalid("fit needs at least one paired point");
    }
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if sxx == 0.0 {
        return invalid("fit through origin needs a nonzero abscissa");
    }
    let slope = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx;
    Ok(LinearFit { slope, intercept: 0.0, r_squared: r_squared(x, y, |v| slope * v) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedFit {
    /// `d c_s / d(Jt)` in sites per `1/J`.
    pub v: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub low_confidence: bool,
}

/// Slope of the centre-of-mass spread over the window.
pub fn fit_speed(series: &ObservableSeries, window: &AnalysisWindow) -> Result<SpeedFit> {
    let idx = window.indices(series);
    if idx.len() < 2 {
        return invalid("speed fit needs at least two samples in the window");
    }
    let fit = linear_fit(&select(&series.times, &idx), &select(&series.c_s, &idx))?;
    Ok(SpeedFit {
        v: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        low_confidence: fit.r_squared < LOW_CONFIDENCE_R2,
    })
}

/// Occupation-weighted `<|c - c_center|>` for each requested size that
/// carries at least [`MIN_SIZE_PROBABILITY`].
pub fn size_filtering_profile(grid: &OccupationGrid, r_values: &[usize]) -> Vec<(usize, f64)> {
    let center = grid.chain_center();
    let max_r = grid.sites().saturating_sub(1);
    let mut weight = vec![0.0; max_r + 1];
    let mut moment = vec![0.0; max_r + 1];
    for (r, c, p) in grid.cells() {
        weight[r] += p;
        moment[r] += p * (c - center).abs();
    }
    r_values
        .iter()
        .filter(|&&r| r >= 1 && r <= max_r && weight[r] >= MIN_SIZE_PROBABILITY)
        .map(|&r| (r, moment[r] / weight[r]))
        .collect()
}

/// Distance from the chain centre to the outermost site whose density
/// exceeds `threshold`, scanning in from the left edge; `None` before
/// anything crosses it.
pub fn front_distance(density: &[f64], threshold: f64) -> Option<f64> {
    let center = (density.len() + 1) as f64 / 2.0;
    density
        .iter()
        .position(|&n| n > threshold)
        .map(|i| center - (i + 1) as f64)
}

/// Light-cone front per sample, a diagnostic only.
pub fn front_track(series: &ObservableSeries) -> Vec<Option<f64>> {
    series.density.iter().map(|d| front_distance(d, FRONT_THRESHOLD)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryDiagnostics {
    pub window: AnalysisWindow,
    pub samples: usize,
    pub speed_intercept: f64,
    pub speed_r_squared: f64,
    pub speed_low_confidence: bool,
    pub peak_prominence: Option<f64>,
    /// Set when frequency extraction failed.
    pub frequency_note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MesonSummary {
    pub r_prime_avg: f64,
    pub omega: Option<f64>,
    pub v: f64,
    pub diagnostics: SummaryDiagnostics,
}

/// All three headline quantities over one window. A missing oscillation is
/// reported in the diagnostics rather than as an error.
pub fn summarize(series: &ObservableSeries, window: &AnalysisWindow) -> Result<MesonSummary> {
    let r_prime_avg = long_time_average(series, window)?;
    let speed = fit_speed(series, window)?;
    let (omega, prominence, note) = match dominant_frequency(series, window) {
        Ok(p) => (Some(p.omega), Some(p.prominence), None),
        Err(e @ (Error::NoOscillation(_) | Error::InvalidArgument(_))) => (None, None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    Ok(MesonSummary {
        r_prime_avg,
        omega,
        v: speed.v,
        diagnostics: SummaryDiagnostics {
            window: *window,
            samples: window.indices(series).len(),
            speed_intercept: speed.intercept,
            speed_r_squared: speed.r_squared,
            speed_low_confidence: speed.low_confidence,
            peak_prominence: prominence,
            frequency_note: note,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::TwoParticleBasis;
    use crate::dynamics::{initial_theta_state, occupation_grid, time_grid};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn synthetic(t_max: f64, dt: f64, f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> ObservableSeries {
        let times = time_grid(t_max, dt).unwrap();
        let n = times.len();
        ObservableSeries {
            r_avg: times.iter().map(|&t| f(t)).collect(),
            c_s: times.iter().map(|&t| g(t)).collect(),
            energy: vec![0.0; n],
            norm_error: vec![0.0; n],
            left_weight: vec![0.5; n],
            right_weight: vec![0.5; n],
            reflection_flag: vec![false; n],
            density: vec![Vec::new(); n],
            snapshots: Vec::new(),
            times,
        }
    }

    #[test]
    fn constant_average() {
        let s = synthetic(60.0, 0.25, |_| 1.0, |_| 0.0);
        let w = AnalysisWindow::new(10.0, 60.0).unwrap();
        assert_eq!(long_time_average(&s, &w).unwrap(), 1.0);
    }

    #[test]
    fn window_validation() {
        assert!(AnalysisWindow::new(5.0, 5.0).is_err());
        assert!(AnalysisWindow::new(-1.0, 5.0).is_err());
        let s = synthetic(60.0, 0.25, |_| 1.0, |_| 0.0);
        let short = AnalysisWindow::new(10.0, 20.0).unwrap();
        assert_eq!(short.indices(&s).len(), 41);
        assert!(long_time_average(&s, &short).is_err());
        let beyond = AnalysisWindow::new(70.0, 80.0).unwrap();
        assert!(long_time_average(&s, &beyond).is_err());
    }

    #[test]
    fn guard_clips_window() {
        let mut s = synthetic(60.0, 0.25, |_| 1.0, |_| 0.0);
        for (i, &t) in s.times.iter().enumerate() {
            s.reflection_flag[i] = t >= 40.0;
        }
        let w = AnalysisWindow::default_for(&s).unwrap();
        assert!(w.clipped_by_reflection);
        assert_eq!(w.t_end, 39.75);
        let raw = AnalysisWindow::new(10.0, 60.0).unwrap();
        assert!(raw.indices(&s).iter().all(|&i| s.times[i] < 40.0));
        for f in &mut s.reflection_flag {
            *f = true;
        }
        assert!(AnalysisWindow::default_for(&s).is_err());
    }

    #[test]
    fn known_sinusoid() {
        let s = synthetic(60.0, 0.25, |t| 1.5 + 0.3 * (2.2 * t).sin(), |_| 0.0);
        let w = AnalysisWindow::new(10.0, 60.0).unwrap();
        let p = dominant_frequency(&s, &w).unwrap();
        assert!((p.omega - 2.2).abs() < 0.02, "{}", p.omega);
        assert!(p.prominence > 3.0);
    }

    #[test]
    fn padding_invariance() {
        for &omega in &[0.9, 2.2, 5.3, 9.7] {
            let s = synthetic(60.0, 0.25, |t| 1.2 + 0.1 * (omega * t + 0.3).cos(), |_| 0.0);
            let idx = AnalysisWindow::new(10.0, 60.0).unwrap().indices(&s);
            let (t, v) = (select(&s.times, &idx), select(&s.r_avg, &idx));
            let a = spectral_peak(&t, &v, 8).unwrap().omega;
            let b = spectral_peak(&t, &v, 16).unwrap().omega;
            assert!((a - b).abs() <= 1e-3 * omega, "omega={omega}: {a} vs {b}");
        }
    }

    #[test]
    fn flat_signal_has_no_oscillation() {
        let s = synthetic(60.0, 0.25, |_| 1.3, |_| 0.0);
        let w = AnalysisWindow::new(10.0, 60.0).unwrap();
        assert!(matches!(dominant_frequency(&s, &w), Err(Error::NoOscillation(_))));
    }

    #[test]
    fn too_few_fft_samples() {
        let s = synthetic(60.0, 0.25, |t| (2.0 * t).sin(), |_| 0.0);
        let w = AnalysisWindow::new(10.0, 40.0).unwrap();
        assert!(matches!(dominant_frequency(&s, &w), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn exact_linear_speed() {
        let s = synthetic(60.0, 0.25, |_| 1.0, |t| 0.4 * t);
        let w = AnalysisWindow::new(10.0, 60.0).unwrap();
        let fit = fit_speed(&s, &w).unwrap();
        assert!((fit.v - 0.4).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-10);
        assert!(!fit.low_confidence);
    }

    #[test]
    fn noisy_speed_flagged() {
        let s = synthetic(60.0, 0.25, |_| 1.0, |t| (3.0 * t).sin());
        let w = AnalysisWindow::new(10.0, 60.0).unwrap();
        assert!(fit_speed(&s, &w).unwrap().low_confidence);
    }

    #[test]
    fn origin_fit() {
        let x = [1.0, 2.0, 4.0];
        let y = [0.5, 1.0, 2.0];
        let f = fit_through_origin(&x, &y).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-15);
        assert!((f.r_squared - 1.0).abs() < 1e-15);
        let g = linear_fit(&x, &[1.0, 3.0, 7.0]).unwrap();
        assert!((g.slope - 2.0).abs() < 1e-14 && (g.intercept + 1.0).abs() < 1e-14);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn initial_state_profile() {
        let b = Arc::new(TwoParticleBasis::new(20).unwrap());
        let psi = initial_theta_state(&b, 0.0).unwrap();
        let prof = size_filtering_profile(&occupation_grid(&psi), &[1, 2, 3]);
        assert_eq!(prof, vec![(1, 0.0)]);
    }

    #[test]
    fn front_scan() {
        let mut d = vec![0.0; 10];
        assert_eq!(front_distance(&d, 1e-2), None);
        d[2] = 0.5;
        assert_eq!(front_distance(&d, 1e-2), Some(2.5));
    }

    proptest! {
        #[test]
        fn average_within_range(vals in proptest::collection::vec(0.5f64..5.0, 241)) {
            let mut s = synthetic(60.0, 0.25, |_| 0.0, |_| 0.0);
            s.r_avg = vals;
            let w = AnalysisWindow::new(10.0, 60.0).unwrap();
            let idx = w.indices(&s);
            let lo = idx.iter().map(|&i| s.r_avg[i]).fold(f64::INFINITY, f64::min);
            let hi = idx.iter().map(|&i| s.r_avg[i]).fold(f64::NEG_INFINITY, f64::max);
            let avg = long_time_average(&s, &w).unwrap();
            prop_assert!(avg >= lo - 1e-12 && avg <= hi + 1e-12);
        }

        #[test]
        fn speed_shift_invariant(v in 0.0f64..2.0, c0 in -3.0f64..3.0) {
            let s = synthetic(60.0, 0.25, |_| 1.0, |t| c0 + v * t);
            let a = fit_speed(&s, &AnalysisWindow::new(10.0, 50.0).unwrap()).unwrap().v;
            let b = fit_speed(&s, &AnalysisWindow::new(10.25, 50.25).unwrap()).unwrap().v;
            prop_assert!((a - b).abs() < 1e-10);
            prop_assert!((a - v).abs() < 1e-10);
        }

        #[test]
        fn sinusoid_recovered(omega in 1.0f64..11.0, amp in 0.05f64..1.0, phase in 0.0f64..6.28) {
            let s = synthetic(60.0, 0.25, |t| 1.0 + amp * (omega * t + phase).sin(), |_| 0.0);
            let p = dominant_frequency(&s, &AnalysisWindow::new(10.0, 60.0).unwrap()).unwrap();
            prop_assert!((p.omega - omega).abs() < 0.02 + 2e-3 * omega);
        }
    }
}
