//! Dual spin-chain picture: link spins with the bosons as domain walls.
//!
//! A two-boson state `(i1, i2)` is the spin configuration with a single block
//! of `+1` on links `i2..i1` against a `-1` vacuum. This module samples
//! measurement snapshots from a sector state and runs a Trotterised
//! statevector evolution of the spin Hamiltonian
//!
//! ```text
//! H = -J sum_i (1 - s_{i-1} s_{i+1}) / 2 X_i + h sum_i s_i
//! ```
//!
//! where `s_0` and `s_L` are fixed exterior links reading `-1`.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::TwoParticleBasis;
use crate::dynamics::{initial_theta_state, WaveState};
use crate::error::{invalid, Error, Result};

/// Largest chain the statevector evolution accepts.
pub const MAX_SPIN_SITES: usize = 14;
/// Sampling is split over this many independent streams regardless of
/// hardware, so output depends only on the seed.
pub const SAMPLING_WORKERS: u64 = 4;

/// One measured configuration of the `L - 1` link spins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpinSnapshot {
    links: usize,
    /// Bit `j - 1` set when link `j` reads `+1`.
    mask: u128,
}

impl SpinSnapshot {
    /// The configuration for bosons on sites `i1 > i2`.
    pub fn from_positions(i1: usize, i2: usize, sites: usize) -> Result<Self> {
        if sites < 2 || sites > 129 || i2 == 0 || i1 <= i2 || i1 > sites {
            return invalid(format!("no snapshot for i1={i1}, i2={i2}, L={sites}"));
        }
        let width = i1 - i2;
        let block = if width == 128 { u128::MAX } else { ((1u128 << width) - 1) << (i2 - 1) };
        Ok(Self { links: sites - 1, mask: block })
    }

    /// Parses `+1/-1` spins, rejecting anything but a single `+1` block.
    pub fn from_spins(spins: &[i8]) -> Result<Self> {
        if spins.is_empty() || spins.len() > 128 {
            return invalid("need between 1 and 128 link spins");
        }
        let mut mask = 0u128;
        for (j, &s) in spins.iter().enumerate() {
            match s {
                1 => mask |= 1 << j,
                -1 => {}
                _ => return invalid(format!("spin {s} is not +1 or -1")),
            }
        }
        let snap = Self { links: spins.len(), mask };
        if snap.domain_walls().is_none() {
            return invalid("configuration is not a single +1 block");
        }
        Ok(snap)
    }

    pub fn links(&self) -> usize {
        self.links
    }

    pub fn spins(&self) -> Vec<i8> {
        (0..self.links).map(|j| if self.mask >> j & 1 == 1 { 1 } else { -1 }).collect()
    }

    /// `(i2, i1)` when the configuration is a single `+1` block.
    pub fn domain_walls(&self) -> Option<(usize, usize)> {
        if self.mask == 0 {
            return None;
        }
        let lo = self.mask.trailing_zeros() as usize;
        let width = (self.mask >> lo).trailing_ones() as usize;
        (self.mask >> lo >> width == 0 || lo + width == 128).then_some((lo + 1, lo + 1 + width))
    }

    /// Meson size `r = i1 - i2`.
    pub fn size(&self) -> usize {
        self.domain_walls().map_or(0, |(a, b)| b - a)
    }

    /// Centre `(i1 + i2) / 2`.
    pub fn center(&self) -> f64 {
        self.domain_walls().map_or(0.0, |(a, b)| (a + b) as f64 / 2.0)
    }

    /// `u` for `+1`, `d` for `-1`, link 1 first.
    pub fn to_text(&self) -> String {
        self.spins().iter().map(|&s| if s == 1 { 'u' } else { 'd' }).collect()
    }
}

/// Born-rule probabilities of every snapshot, in basis order.
#[derive(Debug, Clone)]
pub struct SnapshotDistribution {
    sites: usize,
    entries: Vec<(SpinSnapshot, f64)>,
}

impl SnapshotDistribution {
    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn entries(&self) -> &[(SpinSnapshot, f64)] {
        &self.entries
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// Entry `r - 1` is the probability of domain-wall separation `r`.
    pub fn r_marginal(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.sites - 1];
        for (s, w) in &self.entries {
            p[s.size() - 1] += w;
        }
        p
    }

    pub fn r_avg(&self) -> f64 {
        self.entries.iter().map(|(s, w)| s.size() as f64 * w).sum()
    }

    /// Spread of the domain-wall midpoint.
    pub fn c_s(&self) -> f64 {
        let mean: f64 = self.entries.iter().map(|(s, w)| s.center() * w).sum();
        let var: f64 = self.entries.iter().map(|(s, w)| (s.center() - mean).powi(2) * w).sum();
        var.max(0.0).sqrt()
    }
}

pub fn sector_to_snapshot_distribution(psi: &WaveState) -> SnapshotDistribution {
    let basis = psi.basis();
    let entries = basis
        .states()
        .iter()
        .zip(psi.probabilities())
        .map(|(s, p)| {
            let snap = SpinSnapshot::from_positions(s.i1, s.i2, basis.sites())
                .expect("basis states are valid positions");
            (snap, p)
        })
        .collect();
    SnapshotDistribution { sites: basis.sites(), entries }
}

/// Draws with their sample estimators.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub seed: u64,
    pub snapshots: Vec<SpinSnapshot>,
    pub r_avg_hat: f64,
    /// Sample standard deviation of the domain-wall separation.
    pub r_std: f64,
    /// Sample standard deviation of the domain-wall midpoint.
    pub c_s_hat: f64,
}

impl SampleSet {
    /// `r_std / sqrt(count)`.
    pub fn r_standard_error(&self) -> f64 {
        self.r_std / (self.snapshots.len() as f64).sqrt()
    }
}

fn draw(cdf: &[f64], entries: &[(SpinSnapshot, f64)], rng: &mut ChaCha8Rng, count: usize) -> Vec<SpinSnapshot> {
    let total = *cdf.last().unwrap();
    (0..count)
        .map(|_| {
            let u = rng.gen::<f64>() * total;
            let k = cdf.partition_point(|&c| c <= u).min(entries.len() - 1);
            entries[k].0
        })
        .collect()
}

/// Inverse-CDF sampling with ChaCha8. Worker `w` owns stream `w` of the
/// seeded generator and draws a contiguous share of `count`.
pub fn sample_snapshots(dist: &SnapshotDistribution, count: usize, seed: u64) -> Result<SampleSet> {
    if count == 0 {
        return invalid("count must be at least 1");
    }
    let entries = dist.entries.as_slice();
    if entries.is_empty() || !(dist.total() > 0.0) {
        return invalid("distribution carries no probability");
    }
    let cdf: Vec<f64> = entries
        .iter()
        .scan(0.0, |acc, e| {
            *acc += e.1;
            Some(*acc)
        })
        .collect();
    let workers = SAMPLING_WORKERS as usize;
    let share = |w: usize| count / workers + usize::from(w < count % workers);
    let parts: Vec<Vec<SpinSnapshot>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let cdf = &cdf;
                scope.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(w as u64);
                    draw(cdf, entries, &mut rng, share(w))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sampling worker panicked")).collect()
    });
    let snapshots: Vec<SpinSnapshot> = parts.into_iter().flatten().collect();

    let n = snapshots.len() as f64;
    let stats = |f: &dyn Fn(&SpinSnapshot) -> f64| {
        let mean = snapshots.iter().map(f).sum::<f64>() / n;
        let var = if snapshots.len() > 1 {
            snapshots.iter().map(|s| (f(s) - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        (mean, var.sqrt())
    };
    let (r_avg_hat, r_std) = stats(&|s| s.size() as f64);
    let (_, c_s_hat) = stats(&|s| s.center());
    Ok(SampleSet { seed, snapshots, r_avg_hat, r_std, c_s_hat })
}

/// Run metadata written at the top of a snapshot file.
#[derive(Debug, Clone, Copy)]
pub struct SnapshotHeader {
    pub sites: usize,
    pub h_over_j: f64,
    pub theta: f64,
    pub jt: f64,
    pub seed: u64,
}

/// One line per snapshot of `u`/`d` characters after a `#` header.
pub fn write_snapshots<W: Write>(mut out: W, header: &SnapshotHeader, samples: &SampleSet) -> std::io::Result<()> {
    writeln!(out, "# {}", crate::VERSION)?;
    writeln!(
        out,
        "# L={} h/J={} theta={} Jt={} seed={} count={}",
        header.sites,
        header.h_over_j,
        header.theta,
        header.jt,
        header.seed,
        samples.snapshots.len()
    )?;
    writeln!(
        out,
        "# r_avg_hat={} r_std={} c_s_hat={}",
        samples.r_avg_hat, samples.r_std, samples.c_s_hat
    )?;
    for s in &samples.snapshots {
        writeln!(out, "{}", s.to_text())?;
    }
    Ok(())
}

/// Amplitudes over all `2^(L-1)` link configurations; bit `j - 1` of the
/// index is link `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinStateVector {
    links: usize,
    amplitudes: Vec<Complex64>,
}

fn domain_wall_count(mask: usize, links: usize) -> u32 {
    // pad with the -1 exterior links on both sides
    let padded = mask << 1;
    ((padded ^ (padded >> 1)) & ((1 << (links + 1)) - 1)).count_ones()
}

impl SpinStateVector {
    fn check_capacity(sites: usize) -> Result<()> {
        if sites > MAX_SPIN_SITES {
            return Err(Error::Capacity(format!(
                "spin statevector needs 2^{} amplitudes; limit is L = {MAX_SPIN_SITES}",
                sites.saturating_sub(1)
            )));
        }
        if sites < 2 {
            return invalid("need at least two sites");
        }
        Ok(())
    }

    /// Embeds a sector state.
    pub fn from_sector(psi: &WaveState) -> Result<Self> {
        let sites = psi.basis().sites();
        Self::check_capacity(sites)?;
        let links = sites - 1;
        let mut amplitudes = vec![Complex64::default(); 1 << links];
        for (s, &a) in psi.basis().states().iter().zip(psi.amplitudes()) {
            amplitudes[sector_mask(s.i1, s.i2)] = a;
        }
        Ok(Self { links, amplitudes })
    }

    /// Projects back onto the sector; fails if any amplitude sits outside it.
    pub fn to_sector(&self, basis: &Arc<TwoParticleBasis>) -> Result<WaveState> {
        if basis.sites() != self.links + 1 {
            return invalid("basis size does not match the spin chain");
        }
        if self.max_leakage() > 0.0 {
            return invalid("state has weight outside the two-domain-wall sector");
        }
        let amps = basis.states().iter().map(|s| self.amplitudes[sector_mask(s.i1, s.i2)]).collect();
        WaveState::normalized(basis.clone(), amps)
    }

    pub fn links(&self) -> usize {
        self.links
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest `|amplitude|` on a configuration without exactly two
    /// domain walls.
    pub fn max_leakage(&self) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|&(m, _)| domain_wall_count(m, self.links) != 2)
            .map(|(_, a)| a.norm())
            .fold(0.0, f64::max)
    }

    /// Whether every nonzero component has exactly two domain walls.
    pub fn in_two_wall_sector(&self) -> bool {
        self.max_leakage() == 0.0
    }

    fn apply_field(&mut self, h: f64, tau: f64) {
        for (m, a) in self.amplitudes.iter_mut().enumerate() {
            let up = (m & ((1 << self.links) - 1)).count_ones() as f64;
            let sz = 2.0 * up - self.links as f64;
            *a *= Complex64::from_polar(1.0, -h * sz * tau);
        }
    }

    /// `exp(i J tau P_j X_j)` for every link `j` of the given parity
    /// (1-based), where `P_j` projects on unequal neighbours.
    fn apply_flips(&mut self, j: f64, tau: f64, parity: usize) {
        let (c, s) = ((j * tau).cos(), (j * tau).sin());
        let links = self.links;
        let spin = |m: usize, link: usize| -> bool { link >= 1 && link <= links && (m >> (link - 1)) & 1 == 1 };
        for link in (1..=links).filter(|l| l % 2 == parity) {
            let bit = 1 << (link - 1);
            for m in 0..self.amplitudes.len() {
                if m & bit != 0 || spin(m, link - 1) == spin(m, link + 1) {
                    continue;
                }
                let (a, b) = (self.amplitudes[m], self.amplitudes[m | bit]);
                let i_s = Complex64::new(0.0, s);
                self.amplitudes[m] = a * c + b * i_s;
                self.amplitudes[m | bit] = b * c + a * i_s;
            }
        }
    }

    /// One Strang step: half field, half even flips, full odd flips, half
    /// even flips, half field.
    pub fn strang_step(&mut self, j: f64, h: f64, dt: f64) {
        self.apply_field(h, dt / 2.0);
        self.apply_flips(j, dt / 2.0, 0);
        self.apply_flips(j, dt, 1);
        self.apply_flips(j, dt / 2.0, 0);
        self.apply_field(h, dt / 2.0);
    }
}

fn sector_mask(i1: usize, i2: usize) -> usize {
    ((1 << (i1 - i2)) - 1) << (i2 - 1)
}

/// Recorded Trotter trajectory with per-step health checks.
#[derive(Debug, Clone)]
pub struct SpinTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<SpinStateVector>,
    /// Largest single-step change in the norm.
    pub max_step_norm_drift: f64,
    /// True when every step stayed inside the two-domain-wall sector.
    pub sector_preserved: bool,
}

impl SpinTrajectory {
    pub fn last(&self) -> &SpinStateVector {
        self.states.last().expect("trajectory always holds the initial state")
    }
}

/// Strang-split evolution from the tilted-link state. States are kept at
/// step 0, every `record_every` steps and at the final step.
pub fn trotter_evolve_spin(
    sites: usize,
    j: f64,
    h: f64,
    theta: f64,
    dt: f64,
    steps: usize,
    record_every: usize,
) -> Result<SpinTrajectory> {
    SpinStateVector::check_capacity(sites)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return invalid("dt must be positive");
    }
    let basis = Arc::new(TwoParticleBasis::new(sites)?);
    let mut psi = SpinStateVector::from_sector(&initial_theta_state(&basis, theta)?)?;
    let every = record_every.max(1);
    let mut traj = SpinTrajectory {
        times: vec![0.0],
        states: vec![psi.clone()],
        max_step_norm_drift: 0.0,
        sector_preserved: psi.in_two_wall_sector(),
    };
    let mut norm = psi.norm();
    for step in 1..=steps {
        psi.strang_step(j, h, dt);
        let n = psi.norm();
        traj.max_step_norm_drift = traj.max_step_norm_drift.max((n - norm).abs());
        norm = n;
        traj.sector_preserved &= psi.in_two_wall_sector();
        if step % every == 0 || step == steps {
            traj.times.push(step as f64 * dt);
            traj.states.push(psi.clone());
        }
    }
    Ok(traj)
}
