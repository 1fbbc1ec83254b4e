//! Initial states, exact time evolution and observables.

use std::sync::Arc;

use num_complex::Complex64;

use crate::basis::TwoParticleBasis;
use crate::error::{invalid, Result};
use crate::hamiltonian::SparseSymmetricOperator;
use crate::linalg::Spectrum;

/// Number of sites at each chain end watched by the reflection guard.
pub const EDGE_SITES: usize = 5;
/// Edge density above which later times are flagged as boundary-affected.
pub const EDGE_THRESHOLD: f64 = 1e-3;

/// Complex amplitudes over the pair basis.
#[derive(Debug, Clone)]
pub struct WaveState {
    basis: Arc<TwoParticleBasis>,
    amplitudes: Vec<Complex64>,
}

impl WaveState {
    /// Wraps amplitudes; the state must be normalised to 1e-10.
    pub fn new(basis: Arc<TwoParticleBasis>, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return invalid(format!(
                "state has {} amplitudes but basis dimension is {}",
                amplitudes.len(),
                basis.dim()
            ));
        }
        let state = Self { basis, amplitudes };
        let norm = state.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return invalid(format!("state norm {norm} differs from 1"));
        }
        Ok(state)
    }

    /// Normalises before wrapping.
    pub fn normalized(basis: Arc<TwoParticleBasis>, mut amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return invalid("cannot normalise a zero or non-finite state");
        }
        for a in &mut amplitudes {
            *a /= norm;
        }
        Self::new(basis, amplitudes)
    }

    /// A single basis configuration with unit amplitude.
    pub fn basis_state(basis: Arc<TwoParticleBasis>, index: usize) -> Result<Self> {
        if index >= basis.dim() {
            return invalid(format!("basis index {index} out of range"));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); basis.dim()];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Self::new(basis, amplitudes)
    }

    pub fn basis(&self) -> &Arc<TwoParticleBasis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn overlap(&self, other: &WaveState) -> Complex64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    /// `1 - |<self|other>|^2`.
    pub fn infidelity(&self, other: &WaveState) -> f64 {
        1.0 - self.overlap(other).norm_sqr()
    }

    pub fn energy(&self, hamiltonian: &SparseSymmetricOperator) -> f64 {
        hamiltonian.expectation(&self.amplitudes)
    }

    /// Probability of each relative coordinate; entry `r - 1` holds `P(r)`.
    pub fn r_distribution(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.basis.sites() - 1];
        for (s, a) in self.basis.states().iter().zip(&self.amplitudes) {
            p[s.r() - 1] += a.norm_sqr();
        }
        p
    }

    /// `sum_r r P(r)`.
    pub fn r_avg(&self) -> f64 {
        self.r_distribution().iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum()
    }

    /// Probability of each doubled centre `cc`; entry `cc` holds `P(cc)`.
    pub fn center_distribution(&self) -> Vec<f64> {
        let mut p = vec![0.0; 2 * self.basis.sites() + 1];
        for (s, a) in self.basis.states().iter().zip(&self.amplitudes) {
            p[s.cc()] += a.norm_sqr();
        }
        p
    }

    /// Standard deviation of the centre of mass `c = cc / 2`, in sites.
    pub fn c_s(&self) -> f64 {
        let p = self.center_distribution();
        let total: f64 = p.iter().sum();
        let mean = p.iter().enumerate().map(|(cc, w)| cc as f64 / 2.0 * w).sum::<f64>() / total;
        let var = p
            .iter()
            .enumerate()
            .map(|(cc, w)| (cc as f64 / 2.0 - mean).powi(2) * w)
            .sum::<f64>()
            / total;
        var.sqrt()
    }

    /// Occupation of every site; entry `i - 1` is `<n_i>`.
    pub fn density(&self) -> Vec<f64> {
        let mut n = vec![0.0; self.basis.sites()];
        for (s, a) in self.basis.states().iter().zip(&self.amplitudes) {
            let w = a.norm_sqr();
            n[s.i1 - 1] += w;
            n[s.i2 - 1] += w;
        }
        n
    }
}

/// The tilted-link superposition of an `r = 1` and an `r = 2` meson at the
/// chain centre: `cos(theta/2) |1, (L+1)/2> - sin(theta/2) |2, L/2 + 1>`.
pub fn initial_theta_state(basis: &Arc<TwoParticleBasis>, theta: f64) -> Result<WaveState> {
    let l = basis.sites();
    if l % 2 != 0 || l < 4 {
        return invalid(format!("theta states need an even chain with L >= 4, got L={l}"));
    }
    if !(0.0..=std::f64::consts::PI).contains(&theta) {
        return invalid(format!("theta must lie in [0, pi], got {theta}"));
    }
    let r1 = basis.index_of_rc(1, l + 1).expect("central r=1 meson exists for even L");
    let r2 = basis.index_of_rc(2, l + 2).expect("r=2 meson exists for even L >= 4");
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); basis.dim()];
    amplitudes[r1] = Complex64::new((theta / 2.0).cos(), 0.0);
    amplitudes[r2] = Complex64::new(-(theta / 2.0).sin(), 0.0);
    WaveState::new(basis.clone(), amplitudes)
}

/// Probability table over `(r, cc)`.
#[derive(Debug, Clone)]
pub struct OccupationGrid {
    basis: Arc<TwoParticleBasis>,
    probabilities: Vec<f64>,
}

impl OccupationGrid {
    pub fn sites(&self) -> usize {
        self.basis.sites()
    }

    /// Probability of meson size `r` with doubled centre `cc`; zero for
    /// combinations outside the basis.
    pub fn at(&self, r: usize, cc: usize) -> f64 {
        self.basis.index_of_rc(r, cc).map_or(0.0, |i| self.probabilities[i])
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Entry `r - 1` holds the probability of size `r`.
    pub fn r_marginal(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.sites() - 1];
        for (s, w) in self.basis.states().iter().zip(&self.probabilities) {
            p[s.r() - 1] += w;
        }
        p
    }

    /// Entry `cc` holds the probability of doubled centre `cc`.
    pub fn cc_marginal(&self) -> Vec<f64> {
        let mut p = vec![0.0; 2 * self.sites() + 1];
        for (s, w) in self.basis.states().iter().zip(&self.probabilities) {
            p[s.cc()] += w;
        }
        p
    }

    /// Site occupations recovered from `(r, cc)` cells.
    pub fn site_density(&self) -> Vec<f64> {
        let l = self.sites();
        let mut n = vec![0.0; l];
        for r in 1..l {
            for cc in (r + 2..=2 * l - r).step_by(2) {
                let w = self.at(r, cc);
                n[(cc + r) / 2 - 1] += w;
                n[(cc - r) / 2 - 1] += w;
            }
        }
        n
    }

    /// Non-empty cells as `(r, c, probability)` with `c = cc / 2`.
    pub fn cells(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.basis
            .states()
            .iter()
            .zip(&self.probabilities)
            .map(|(s, &w)| (s.r(), s.center(), w))
    }

    pub fn chain_center(&self) -> f64 {
        self.basis.chain_center()
    }
}

pub fn occupation_grid(psi: &WaveState) -> OccupationGrid {
    OccupationGrid { basis: psi.basis.clone(), probabilities: psi.probabilities() }
}

/// Observables sampled on a time grid.
#[derive(Debug, Clone, Default)]
pub struct ObservableSeries {
    /// Times in units of `1/J`.
    pub times: Vec<f64>,
    pub r_avg: Vec<f64>,
    pub c_s: Vec<f64>,
    pub energy: Vec<f64>,
    /// `| ||psi(t)|| - 1 |`.
    pub norm_error: Vec<f64>,
    /// Site occupations per time, length `L` each.
    pub density: Vec<Vec<f64>>,
    /// Occupation summed over the left and right halves of the chain.
    pub left_weight: Vec<f64>,
    pub right_weight: Vec<f64>,
    /// Set once the edge density has exceeded [`EDGE_THRESHOLD`].
    pub reflection_flag: Vec<bool>,
    /// Occupation grids at requested snapshot times.
    pub snapshots: Vec<(f64, OccupationGrid)>,
}

impl ObservableSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// First flagged time, if any.
    pub fn reflection_time(&self) -> Option<f64> {
        self.reflection_flag.iter().position(|&f| f).map(|i| self.times[i])
    }

    fn push(&mut self, t: f64, psi: &WaveState, hamiltonian: &SparseSymmetricOperator) {
        let density = psi.density();
        let l = density.len();
        let edge: f64 = density[..EDGE_SITES.min(l)].iter().sum::<f64>()
            + density[l.saturating_sub(EDGE_SITES)..].iter().sum::<f64>();
        let already = self.reflection_flag.last().copied().unwrap_or(false);
        self.times.push(t);
        self.r_avg.push(psi.r_avg());
        self.c_s.push(psi.c_s());
        self.energy.push(psi.energy(hamiltonian));
        self.norm_error.push((psi.norm() - 1.0).abs());
        self.left_weight.push(density[..l / 2].iter().sum());
        self.right_weight.push(density[l - l / 2..].iter().sum());
        self.reflection_flag.push(already || edge > EDGE_THRESHOLD);
        self.density.push(density);
    }
}

/// Reconstructs `psi(t) = V exp(-i Lambda t) V^T psi(0)` from a spectrum.
pub struct SpectralPropagator<'a> {
    spectrum: &'a Spectrum,
    basis: Arc<TwoParticleBasis>,
    coefficients: Vec<Complex64>,
}

impl<'a> SpectralPropagator<'a> {
    pub fn new(spectrum: &'a Spectrum, psi0: &WaveState) -> Result<Self> {
        let n = spectrum.dim();
        if psi0.amplitudes.len() != n {
            return invalid(format!(
                "spectrum dimension {n} does not match state dimension {}",
                psi0.amplitudes.len()
            ));
        }
        let coefficients = (0..n)
            .map(|j| {
                spectrum
                    .eigenvector(j)
                    .iter()
                    .zip(&psi0.amplitudes)
                    .map(|(&v, a)| a * v)
                    .sum()
            })
            .collect();
        Ok(Self { spectrum, basis: psi0.basis.clone(), coefficients })
    }

    /// Overlaps `<v_j|psi(0)>` in eigenvalue order.
    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn state_at(&self, t: f64) -> WaveState {
        let n = self.spectrum.dim();
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        for (j, (&lam, &c)) in self.spectrum.eigenvalues.iter().zip(&self.coefficients).enumerate() {
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let w = c * Complex64::from_polar(1.0, -lam * t);
            let v = self.spectrum.eigenvector(j);
            for ((r, i), &x) in re.iter_mut().zip(im.iter_mut()).zip(v) {
                *r += w.re * x;
                *i += w.im * x;
            }
        }
        let amplitudes = re.into_iter().zip(im).map(|(r, i)| Complex64::new(r, i)).collect();
        WaveState { basis: self.basis.clone(), amplitudes }
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return invalid("times must be finite and nonnegative");
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return invalid("times must be ascending");
    }
    Ok(())
}

/// Evolves `psi0` exactly and records observables at each time. Occupation
/// grids are stored for every entry of `snapshot_times`.
pub fn evolve_spectral(
    spectrum: &Spectrum,
    hamiltonian: &SparseSymmetricOperator,
    psi0: &WaveState,
    times: &[f64],
    snapshot_times: &[f64],
) -> Result<ObservableSeries> {
    if hamiltonian.dim() != spectrum.dim() {
        return invalid("hamiltonian and spectrum dimensions differ");
    }
    check_times(times)?;
    let prop = SpectralPropagator::new(spectrum, psi0)?;
    let mut series = ObservableSeries::default();
    for &t in times {
        series.push(t, &prop.state_at(t), hamiltonian);
    }
    for &t in snapshot_times {
        series.snapshots.push((t, occupation_grid(&prop.state_at(t))));
    }
    Ok(series)
}

/// Uniform grid `0, dt, 2 dt, ...` up to and including `t_max`.
pub fn time_grid(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && t_max >= 0.0 && t_max.is_finite()) {
        return invalid(format!("need dt > 0 and t_max >= 0, got dt={dt}, t_max={t_max}"));
    }
    let steps = (t_max / dt + 1e-9).floor() as usize;
    Ok((0..=steps).map(|k| k as f64 * dt).collect())
}

/// Fixed-step classical Runge–Kutta integration of `i d psi/dt = H psi`.
pub fn integrate_rk4(
    hamiltonian: &SparseSymmetricOperator,
    psi0: &WaveState,
    t_end: f64,
    dt: f64,
) -> Result<WaveState> {
    if !(dt > 0.0 && t_end >= 0.0) {
        return invalid("need dt > 0 and t_end >= 0");
    }
    let n = hamiltonian.dim();
    if psi0.amplitudes.len() != n {
        return invalid("state and hamiltonian dimensions differ");
    }
    let steps = (t_end / dt).round().max(1.0) as usize;
    let h = t_end / steps as f64;
    let minus_i = Complex64::new(0.0, -1.0);
    let deriv = |x: &[Complex64], out: &mut [Complex64]| {
        hamiltonian.matvec_complex(x, out);
        for o in out.iter_mut() {
            *o *= minus_i;
        }
    };
    let mut y = psi0.amplitudes.clone();
    let (mut k1, mut k2, mut k3, mut k4) =
        (vec![Complex64::default(); n], vec![Complex64::default(); n], vec![Complex64::default(); n], vec![Complex64::default(); n]);
    let mut tmp = vec![Complex64::default(); n];
    for _ in 0..steps {
        deriv(&y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + k1[i] * (h / 2.0);
        }
        deriv(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + k2[i] * (h / 2.0);
        }
        deriv(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + k3[i] * h;
        }
        deriv(&tmp, &mut k4);
        for i in 0..n {
            y[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
        }
    }
    Ok(WaveState { basis: psi0.basis.clone(), amplitudes: y })
}
