//! Sector Hamiltonian and momentum-resolved relative-coordinate blocks.
//!
//! Energies are in the same units as the hopping `j`; the field enters as
//! the string tension `2h` per raised link.

use std::io::Write;

use num_complex::Complex64;

use crate::basis::TwoParticleBasis;
use crate::error::{invalid, Result};

/// Real symmetric operator stored as its upper triangle plus a full CSR copy
/// for matrix-vector products.
#[derive(Debug, Clone)]
pub struct SparseSymmetricOperator {
    dim: usize,
    /// `(row, col, value)` with `row <= col`, sorted.
    entries: Vec<(usize, usize, f64)>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymmetricOperator {
    /// Builds from upper-triangle triplets. Duplicates are summed.
    pub fn from_upper_triplets(dim: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(r, c, _) in &entries {
            if r > c || c >= dim {
                return invalid(format!("entry ({r}, {c}) outside upper triangle of {dim}x{dim}"));
            }
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        entries.dedup_by(|later, kept| {
            if later.0 == kept.0 && later.1 == kept.1 {
                kept.2 += later.2;
                true
            } else {
                false
            }
        });

        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
        for &(r, c, v) in &entries {
            rows[r].push((c, v));
            if r != c {
                rows[c].push((r, v));
            }
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { dim, entries, row_ptr, col_idx, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Nonzeros of row `i` as `(col, value)` pairs, both triangles.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for &(r, c, v) in &self.entries {
            if r == c {
                d[r] = v;
            }
        }
        d
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn matvec_complex(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(c, v)| x[c] * v).sum();
        }
    }

    /// `<x|H|x>` for a complex vector.
    pub fn expectation(&self, x: &[Complex64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            let hx: Complex64 = self.row(i).map(|(c, v)| x[c] * v).sum();
            acc += (x[i].conj() * hx).re;
        }
        acc
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim;
        let mut a = vec![0.0; n * n];
        for &(r, c, v) in &self.entries {
            a[r * n + c] = v;
            a[c * n + r] = v;
        }
        a
    }

    /// Largest Gershgorin radius bound on the spectrum, `max_i sum_j |H_ij|`.
    pub fn norm_bound(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Writes a 1-based `row col value` triplet list with a matrix-market
    /// style banner.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real symmetric")?;
        writeln!(out, "{} {} {}", self.dim, self.dim, self.entries.len())?;
        for &(r, c, v) in &self.entries {
            // symmetric storage keeps the lower triangle
            writeln!(out, "{} {} {:.17e}", c + 1, r + 1, v)?;
        }
        Ok(())
    }
}

/// Builds the two-boson Hamiltonian on an open chain.
///
/// Diagonal: string energy `2 h r`. Off-diagonal: `-j` between configurations
/// that differ by one boson hopping one site, with the bosons kept distinct
/// and ordered.
pub fn build_sector_hamiltonian(
    basis: &TwoParticleBasis,
    j: f64,
    h: f64,
) -> Result<SparseSymmetricOperator> {
    if !(j.is_finite() && h.is_finite()) {
        return invalid("couplings must be finite");
    }
    let mut entries = Vec::with_capacity(basis.dim() * 3);
    for (idx, s) in basis.states().iter().enumerate() {
        entries.push((idx, idx, 2.0 * h * s.r() as f64));
        if j == 0.0 {
            continue;
        }
        // Only forward hops; the symmetric partner is implied.
        let hops = [(s.i1 + 1, s.i2), (s.i1, s.i2 + 1)];
        for (i1, i2) in hops {
            if let Some(other) = basis.index_of_sites(i1, i2) {
                let (a, b) = if idx < other { (idx, other) } else { (other, idx) };
                entries.push((a, b, -j));
            }
        }
    }
    SparseSymmetricOperator::from_upper_triplets(basis.dim(), entries)
}

/// Default relative-coordinate cutoff for momentum blocks.
pub fn default_r_max(j: f64, h: f64) -> usize {
    let scaled = (10.0 * j / h).ceil();
    let grown = if scaled.is_finite() && scaled > 0.0 { scaled as usize + 20 } else { 0 };
    grown.max(50)
}

/// Relative-coordinate problem at fixed centre-of-mass momentum, with a hard
/// wall below `r = 1` and truncation above `r_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalOperator {
    pub diagonal: Vec<f64>,
    pub off_diagonal: Vec<f64>,
    pub k: f64,
}

impl TridiagonalOperator {
    pub fn new(diagonal: Vec<f64>, off_diagonal: Vec<f64>, k: f64) -> Result<Self> {
        if diagonal.is_empty() || off_diagonal.len() + 1 != diagonal.len() {
            return invalid("off-diagonal length must be one less than diagonal length");
        }
        Ok(Self { diagonal, off_diagonal, k })
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = self.diagonal[i];
        }
        for (i, &e) in self.off_diagonal.iter().enumerate() {
            a[i * n + i + 1] = e;
            a[(i + 1) * n + i] = e;
        }
        a
    }

    pub fn to_sparse(&self) -> SparseSymmetricOperator {
        let mut entries: Vec<_> = self.diagonal.iter().enumerate().map(|(i, &d)| (i, i, d)).collect();
        entries.extend(self.off_diagonal.iter().enumerate().map(|(i, &e)| (i, i + 1, e)));
        SparseSymmetricOperator::from_upper_triplets(self.dim(), entries)
            .expect("tridiagonal entries are in range")
    }
}

/// Wannier–Stark block at centre-of-mass momentum `k`: diagonal `2 h r` for
/// `r = 1..=r_max`, constant hopping `-2 j cos(k/2)`.
pub fn build_momentum_block(k: f64, j: f64, h: f64, r_max: usize) -> Result<TridiagonalOperator> {
    if r_max < 2 {
        return invalid(format!("r_max must be at least 2, got {r_max}"));
    }
    if !(k.is_finite() && k.abs() <= 2.0 * std::f64::consts::PI + 1e-12) {
        return invalid(format!("momentum {k} outside [-2pi, 2pi]"));
    }
    let t = -2.0 * j * (k / 2.0).cos();
    let t = if t.abs() < 1e-15 * j.abs().max(1.0) { 0.0 } else { t };
    let diagonal = (1..=r_max).map(|r| 2.0 * h * r as f64).collect();
    TridiagonalOperator::new(diagonal, vec![t; r_max - 1], k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eig_dense, eigenvalues_tridiagonal};

    fn dense_of(basis_l: usize, j: f64, h: f64) -> (TwoParticleBasis, Vec<f64>) {
        let b = TwoParticleBasis::new(basis_l).unwrap();
        let op = build_sector_hamiltonian(&b, j, h).unwrap();
        let d = op.to_dense();
        (b, d)
    }

    #[test]
    fn three_site_matrix_by_hand() {
        // (2,1) and (3,2) are r = 1; (3,1) is r = 2. Only (3,1) is one hop
        // away from both r = 1 states.
        let (j, h) = (0.8, 1.3);
        let (b, d) = dense_of(3, j, h);
        let i21 = b.index_of_sites(2, 1).unwrap();
        let i32 = b.index_of_sites(3, 2).unwrap();
        let i31 = b.index_of_sites(3, 1).unwrap();
        let at = |x: usize, y: usize| d[x * 3 + y];
        assert_eq!(at(i21, i21), 2.0 * h);
        assert_eq!(at(i32, i32), 2.0 * h);
        assert_eq!(at(i31, i31), 4.0 * h);
        assert_eq!(at(i21, i31), -j);
        assert_eq!(at(i32, i31), -j);
        assert_eq!(at(i21, i32), 0.0);
        assert_eq!(b.index_of_rc(2, 4), Some(i31));
    }

    #[test]
    fn bulk_rows_have_four_hops() {
        let b = TwoParticleBasis::new(12).unwrap();
        let op = build_sector_hamiltonian(&b, 1.0, 0.5).unwrap();
        for (idx, s) in b.states().iter().enumerate() {
            let hops = op.row(idx).filter(|&(c, _)| c != idx).count();
            let bulk = s.r() >= 2 && s.i2 >= 2 && s.i1 <= 11;
            if bulk {
                assert_eq!(hops, 4, "state {s:?}");
            } else {
                assert!(hops < 4);
            }
            for (c, v) in op.row(idx).filter(|&(c, _)| c != idx) {
                let t = b.state(c);
                assert_eq!(v, -1.0);
                assert_eq!(t.r().abs_diff(s.r()), 1);
                assert_eq!(t.cc().abs_diff(s.cc()), 1);
            }
            assert_eq!(op.diagonal()[idx], 2.0 * 0.5 * s.r() as f64);
        }
    }

    #[test]
    fn operator_is_symmetric() {
        let (_, d) = dense_of(9, 1.0, 0.37);
        let n = 36;
        for r in 0..n {
            for c in 0..n {
                assert_eq!(d[r * n + c], d[c * n + r]);
            }
        }
    }

    fn power_iteration_radius(d: &[f64], n: usize) -> f64 {
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.37).sin()).collect();
        let mut lambda = 0.0;
        for _ in 0..3000 {
            let mut y = vec![0.0; n];
            for r in 0..n {
                y[r] = (0..n).map(|c| d[r * n + c] * x[c]).sum();
            }
            // square to avoid sign oscillation between +-lambda
            let mut z = vec![0.0; n];
            for r in 0..n {
                z[r] = (0..n).map(|c| d[r * n + c] * y[c]).sum();
            }
            let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            lambda = (norm / xnorm).sqrt();
            x = z.iter().map(|v| v / norm).collect();
        }
        lambda
    }

    #[test]
    fn zero_field_spectral_radius_below_4j() {
        for l in [4, 6, 9] {
            let (_, d) = dense_of(l, 1.0, 0.0);
            let n = l * (l - 1) / 2;
            assert!((0..n).all(|i| d[i * n + i] == 0.0));
            let rho = power_iteration_radius(&d, n);
            assert!(rho < 4.0, "L={l}: rho={rho}");
            assert!(rho > 1.0);
        }
    }

    #[test]
    fn gershgorin_window() {
        let (j, h, l) = (1.0, 0.9, 10);
        let b = TwoParticleBasis::new(l).unwrap();
        let op = build_sector_hamiltonian(&b, j, h).unwrap();
        let spec = eig_dense(&op.to_dense(), op.dim()).unwrap();
        let r_max = (l - 1) as f64;
        for &e in &spec.eigenvalues {
            assert!(e >= 2.0 * h - 4.0 * j - 1e-12);
            assert!(e <= 2.0 * h * r_max + 4.0 * j + 1e-12);
        }
    }

    #[test]
    fn decoupled_ladder_at_k_pi() {
        let blk = build_momentum_block(std::f64::consts::PI, 1.0, 0.7, 12).unwrap();
        assert!(blk.off_diagonal.iter().all(|&e| e == 0.0));
        let ev = eigenvalues_tridiagonal(&blk).unwrap();
        for (i, e) in ev.iter().enumerate() {
            assert_eq!(*e, 2.0 * 0.7 * (i + 1) as f64);
        }
    }

    #[test]
    fn momentum_block_shape() {
        let blk = build_momentum_block(0.4, 1.5, 0.2, 30).unwrap();
        assert_eq!(blk.dim(), 30);
        assert!(blk.off_diagonal.iter().all(|&e| e == -3.0 * 0.2f64.cos()));
        assert_eq!(blk.diagonal[4], 2.0 * 0.2 * 5.0);
        assert!(build_momentum_block(0.0, 1.0, 1.0, 1).is_err());
        assert!(build_momentum_block(7.0, 1.0, 1.0, 10).is_err());
    }

    #[test]
    fn default_cutoff_grows_with_weak_field() {
        assert_eq!(default_r_max(1.0, 5.0), 50);
        assert_eq!(default_r_max(1.0, 0.01), 1020);
        assert_eq!(default_r_max(1.0, 0.3), 54);
    }

    /// Periodic two-boson ring, labelled by the left end `x` of the string
    /// and its length `r`. Test-only fixture for the momentum decomposition.
    fn periodic_sector(l: usize, j: f64, h: f64) -> Vec<f64> {
        let n = l * (l - 1);
        let idx = |x: usize, r: usize| (r - 1) * l + (x % l);
        let mut a = vec![0.0; n * n];
        for r in 1..l {
            for x in 0..l {
                let i = idx(x, r);
                a[i * n + i] = 2.0 * h * r as f64;
                if r + 1 < l {
                    // right end steps right, or left end steps left
                    for t in [idx(x, r + 1), idx(x + l - 1, r + 1)] {
                        a[i * n + t] -= j;
                        a[t * n + i] -= j;
                    }
                }
            }
        }
        a
    }

    #[test]
    fn momentum_blocks_reproduce_periodic_spectrum() {
        let (l, j, h) = (7, 1.0, 0.45);
        let n = l * (l - 1);
        let full = eig_dense(&periodic_sector(l, j, h), n).unwrap();
        let mut union = Vec::new();
        for m in 0..l {
            let k = 2.0 * std::f64::consts::PI * m as f64 / l as f64;
            let blk = build_momentum_block(k, j, h, l - 1).unwrap();
            union.extend(eigenvalues_tridiagonal(&blk).unwrap());
        }
        union.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(union.len(), full.eigenvalues.len());
        for (a, b) in union.iter().zip(&full.eigenvalues) {
            assert!((a - b).abs() < 1e-9 * j, "{a} vs {b}");
        }
    }

    #[test]
    fn triplet_dump() {
        let b = TwoParticleBasis::new(3).unwrap();
        let op = build_sector_hamiltonian(&b, 1.0, 1.0).unwrap();
        let mut out = Vec::new();
        op.write_triplets(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[1], "3 3 5");
        assert_eq!(lines.len(), 7);
    }
}
