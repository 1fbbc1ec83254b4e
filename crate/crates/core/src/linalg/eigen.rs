//! Real symmetric eigensolvers.
//!
//! Dense path: Householder reduction to tridiagonal form followed by the
//! implicit-shift QL iteration. The orthogonal factor is kept transposed
//! (one eigenvector per row) so every rotation and reflection touches
//! contiguous memory.

use crate::error::{invalid, Error, Result};
use crate::hamiltonian::{SparseSymmetricOperator, TridiagonalOperator};

/// Largest dimension accepted by the dense path unless configured otherwise.
pub const DEFAULT_DENSE_LIMIT: usize = 8000;

/// Relative gap below which neighbouring eigenvalues are treated as one
/// degenerate cluster.
const CLUSTER_GAP: f64 = 1e-9;

const MAX_QL_SWEEPS: usize = 60;

/// Eigenvalues in ascending order with matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Row-major, `dim x dim`; row `j` is the eigenvector of `eigenvalues[j]`.
    vectors: Vec<f64>,
    /// `max_j ||H v_j - lambda_j v_j||_2`.
    pub max_residual: f64,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, j: usize) -> &[f64] {
        let n = self.dim();
        &self.vectors[j * n..(j + 1) * n]
    }

    /// All eigenvectors, one per row.
    pub fn vectors_by_row(&self) -> &[f64] {
        &self.vectors
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |V^T V - I|` over all entries.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            let va = self.eigenvector(a);
            for b in a..n {
                let dot: f64 = va.iter().zip(self.eigenvector(b)).map(|(x, y)| x * y).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// `V diag(lambda) V^T`, row-major.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n * n];
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            let v = self.eigenvector(j);
            for r in 0..n {
                let s = lam * v[r];
                if s == 0.0 {
                    continue;
                }
                for (o, &vc) in out[r * n..(r + 1) * n].iter_mut().zip(v) {
                    *o += s * vc;
                }
            }
        }
        out
    }

    fn from_parts(eigenvalues: Vec<f64>, vectors: Vec<f64>) -> Self {
        Self { eigenvalues, vectors, max_residual: f64::NAN }
    }

    fn compute_residual(&mut self, apply: impl Fn(&[f64], &mut [f64])) {
        let n = self.dim();
        let mut hv = vec![0.0; n];
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let v = self.eigenvector(j);
            apply(v, &mut hv);
            let lam = self.eigenvalues[j];
            let res: f64 = hv.iter().zip(v).map(|(a, b)| (a - lam * b).powi(2)).sum();
            worst = worst.max(res.sqrt());
        }
        self.max_residual = worst;
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EigenConfig {
    pub dense_limit: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self { dense_limit: DEFAULT_DENSE_LIMIT }
    }
}

fn check_capacity(n: usize, config: &EigenConfig) -> Result<()> {
    if n > config.dense_limit {
        return Err(Error::Capacity(format!(
            "dimension {n} exceeds the dense eigensolver limit {}; use iterative propagation instead",
            config.dense_limit
        )));
    }
    Ok(())
}

/// Full eigendecomposition of a sparse symmetric operator via the dense path.
pub fn eig_symmetric(op: &SparseSymmetricOperator) -> Result<Spectrum> {
    eig_symmetric_with(op, &EigenConfig::default())
}

pub fn eig_symmetric_with(op: &SparseSymmetricOperator, config: &EigenConfig) -> Result<Spectrum> {
    check_capacity(op.dim(), config)?;
    let mut spec = dense_decompose(op.to_dense(), op.dim(), true)?;
    spec.compute_residual(|x, y| op.matvec(x, y));
    Ok(spec)
}

/// Eigendecomposition of a row-major dense symmetric matrix.
pub fn eig_dense(a: &[f64], n: usize) -> Result<Spectrum> {
    if a.len() != n * n {
        return invalid(format!("expected {} entries for a {n}x{n} matrix, got {}", n * n, a.len()));
    }
    for r in 0..n {
        for c in 0..r {
            if a[r * n + c] != a[c * n + r] {
                return invalid(format!("matrix not symmetric at ({r}, {c})"));
            }
        }
    }
    let mut spec = dense_decompose(a.to_vec(), n, true)?;
    spec.compute_residual(|x, y| {
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = a[r * n..(r + 1) * n].iter().zip(x).map(|(p, q)| p * q).sum();
        }
    });
    Ok(spec)
}

/// Eigendecomposition exploiting an involutive symmetry `perm` of the
/// operator (`H[perm i][perm j] == H[i][j]`). The problem splits into an even
/// and an odd block, each diagonalised densely, and the eigenvectors are
/// lifted back to the full space.
pub fn eig_symmetric_split(
    op: &SparseSymmetricOperator,
    perm: &[usize],
    config: &EigenConfig,
) -> Result<Spectrum> {
    let n = op.dim();
    check_capacity(n, config)?;
    if perm.len() != n || (0..n).any(|i| perm[i] >= n || perm[perm[i]] != i) {
        return invalid("symmetry permutation must be an involution on the operator's index set");
    }
    for i in 0..n {
        for (j, v) in op.row(i) {
            let mirrored = op.row(perm[i]).find(|&(c, _)| c == perm[j]).map(|(_, w)| w);
            if mirrored != Some(v) {
                return invalid("operator does not commute with the supplied permutation");
            }
        }
    }

    // orbit index and coefficients of each basis vector in the symmetric
    // (even) and antisymmetric (odd) combinations
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut even_of = vec![0usize; n];
    let mut odd_of = vec![usize::MAX; n];
    let mut even_coef = vec![0.0; n];
    let mut odd_coef = vec![0.0; n];
    let (mut n_even, mut n_odd) = (0, 0);
    for i in 0..n {
        let p = perm[i];
        if p < i {
            continue;
        }
        if p == i {
            even_of[i] = n_even;
            even_coef[i] = 1.0;
        } else {
            even_of[i] = n_even;
            even_of[p] = n_even;
            even_coef[i] = s;
            even_coef[p] = s;
            odd_of[i] = n_odd;
            odd_of[p] = n_odd;
            odd_coef[i] = s;
            odd_coef[p] = -s;
            n_odd += 1;
        }
        n_even += 1;
    }

    let mut even = vec![0.0; n_even * n_even];
    let mut odd = vec![0.0; n_odd * n_odd];
    for i in 0..n {
        for (j, v) in op.row(i) {
            even[even_of[i] * n_even + even_of[j]] += even_coef[i] * v * even_coef[j];
            if odd_of[i] != usize::MAX && odd_of[j] != usize::MAX {
                odd[odd_of[i] * n_odd + odd_of[j]] += odd_coef[i] * v * odd_coef[j];
            }
        }
    }
    // rounding in the accumulation can break exact symmetry of the blocks
    symmetrize(&mut even, n_even);
    symmetrize(&mut odd, n_odd);

    let even_spec = dense_decompose(even, n_even, false)?;
    let odd_spec = if n_odd > 0 { Some(dense_decompose(odd, n_odd, false)?) } else { None };

    // merge by eigenvalue; ties keep even before odd
    let mut order: Vec<(f64, bool, usize)> =
        even_spec.eigenvalues.iter().enumerate().map(|(k, &e)| (e, false, k)).collect();
    if let Some(o) = &odd_spec {
        order.extend(o.eigenvalues.iter().enumerate().map(|(k, &e)| (e, true, k)));
    }
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut eigenvalues = Vec::with_capacity(n);
    let mut vectors = vec![0.0; n * n];
    for (row, &(e, is_odd, k)) in order.iter().enumerate() {
        eigenvalues.push(e);
        let out = &mut vectors[row * n..(row + 1) * n];
        if is_odd {
            let y = odd_spec.as_ref().expect("odd block present").eigenvector(k);
            for i in 0..n {
                if odd_of[i] != usize::MAX {
                    out[i] = y[odd_of[i]] * odd_coef[i];
                }
            }
        } else {
            let y = even_spec.eigenvector(k);
            for i in 0..n {
                out[i] = y[even_of[i]] * even_coef[i];
            }
        }
    }
    let mut spec = Spectrum::from_parts(eigenvalues, vectors);
    reorthonormalize_clusters(&mut spec);
    spec.compute_residual(|x, y| op.matvec(x, y));
    Ok(spec)
}

fn symmetrize(a: &mut [f64], n: usize) {
    for r in 0..n {
        for c in 0..r {
            let m = 0.5 * (a[r * n + c] + a[c * n + r]);
            a[r * n + c] = m;
            a[c * n + r] = m;
        }
    }
}

/// Full eigendecomposition of a tridiagonal operator.
pub fn eig_tridiagonal(op: &TridiagonalOperator) -> Result<Spectrum> {
    let n = op.dim();
    let mut d = op.diagonal.clone();
    let mut e = op.off_diagonal.clone();
    e.push(0.0);
    let mut z = identity(n);
    ql_implicit(&mut d, &mut e, Some(&mut z))?;
    let mut spec = sorted_spectrum(d, z);
    reorthonormalize_clusters(&mut spec);
    let (diag, off) = (&op.diagonal, &op.off_diagonal);
    spec.compute_residual(|x, y| {
        for i in 0..n {
            let mut acc = diag[i] * x[i];
            if i > 0 {
                acc += off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += off[i] * x[i + 1];
            }
            y[i] = acc;
        }
    });
    Ok(spec)
}

/// Eigenvalues only, ascending; O(n^2).
pub fn eigenvalues_tridiagonal(op: &TridiagonalOperator) -> Result<Vec<f64>> {
    let mut d = op.diagonal.clone();
    let mut e = op.off_diagonal.clone();
    e.push(0.0);
    ql_implicit(&mut d, &mut e, None)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

fn identity(n: usize) -> Vec<f64> {
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    z
}

fn dense_decompose(mut a: Vec<f64>, n: usize, reorth: bool) -> Result<Spectrum> {
    if n == 0 {
        return Ok(Spectrum { eigenvalues: vec![], vectors: vec![], max_residual: 0.0 });
    }
    let (mut d, mut e, mut qt) = tridiagonalize(&mut a, n);
    drop(a);
    ql_implicit(&mut d, &mut e, Some(&mut qt))?;
    let mut spec = sorted_spectrum(d, qt);
    if reorth {
        reorthonormalize_clusters(&mut spec);
    }
    Ok(spec)
}

/// Householder reduction `A = Q T Q^T` using the lower triangle of `a`.
///
/// Returns the diagonal, the sub-diagonal (`e[i] = T[i+1][i]`, with a
/// trailing zero) and `Q^T` row-major. The reflector for column `k` is parked
/// in the unused upper part of row `k`.
fn tridiagonalize(a: &mut [f64], n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut betas = vec![0.0; n];
    let mut p = vec![0.0; n];

    for k in 0..n.saturating_sub(1) {
        d[k] = a[k * n + k];
        let m = n - k - 1;
        let base = k + 1;

        let mut v: Vec<f64> = (base..n).map(|i| a[i * n + k]).collect();
        let scale: f64 = v.iter().map(|x| x.abs()).sum();
        if m == 1 || scale == 0.0 {
            e[k] = v[0];
            betas[k] = 0.0;
            continue;
        }
        let norm = v.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt() * scale;
        let alpha = if v[0] > 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        let beta = 2.0 / vtv;
        e[k] = alpha;
        betas[k] = beta;

        // p = beta * B v with B the trailing block, read from its lower triangle
        let p = &mut p[..m];
        p.fill(0.0);
        for i in 0..m {
            let row = &a[(base + i) * n + base..(base + i) * n + base + i];
            let vi = v[i];
            let mut acc = a[(base + i) * n + base + i] * vi;
            for ((pj, &bij), &vj) in p[..i].iter_mut().zip(row).zip(&v[..i]) {
                acc += bij * vj;
                *pj += bij * vi;
            }
            p[i] += acc;
        }
        for x in p.iter_mut() {
            *x *= beta;
        }
        let kdot: f64 = 0.5 * beta * p.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>();
        for (pi, &vi) in p.iter_mut().zip(&v) {
            *pi -= kdot * vi;
        }
        // B -= v w^T + w v^T on the lower triangle, with w stored in p
        for i in 0..m {
            let (vi, wi) = (v[i], p[i]);
            let row = &mut a[(base + i) * n + base..(base + i) * n + base + i + 1];
            for ((bij, &vj), &wj) in row.iter_mut().zip(&v[..=i]).zip(&p[..=i]) {
                *bij -= vi * wj + wi * vj;
            }
        }
        a[k * n + base..k * n + n].copy_from_slice(&v);
    }
    d[n - 1] = a[(n - 1) * n + n - 1];
    e[n - 1] = 0.0;

    // Q^T = H_{n-3} ... H_0, built as I H_{n-3} ... H_0 so only the trailing
    // block is ever non-trivial.
    let mut qt = identity(n);
    for k in (0..n.saturating_sub(1)).rev() {
        let beta = betas[k];
        if beta == 0.0 {
            continue;
        }
        let base = k + 1;
        let v = &a[k * n + base..k * n + n];
        for i in base..n {
            let row = &mut qt[i * n + base..i * n + n];
            let s: f64 = row.iter().zip(v).map(|(x, y)| x * y).sum();
            if s == 0.0 {
                continue;
            }
            let f = beta * s;
            for (x, &y) in row.iter_mut().zip(v) {
                *x -= f * y;
            }
        }
    }
    (d, e, qt)
}

/// Implicit-shift QL on a symmetric tridiagonal matrix (diagonal `d`,
/// off-diagonal `e[i] = T[i][i+1]`, `e[n-1] = 0`). When `z` is given its rows
/// are rotated alongside, so rows that start as `Q^T` end as eigenvectors.
fn ql_implicit(d: &mut [f64], e: &mut [f64], mut z: Option<&mut [f64]>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    let eps = f64::EPSILON;
    let mut shift_total = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        let mut sweeps = 0;
        if m > l {
            loop {
                sweeps += 1;
                if sweeps > MAX_QL_SWEEPS {
                    return Err(Error::InvalidArgument(format!(
                        "QL iteration failed to converge for eigenvalue {l}"
                    )));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                shift_total += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(z) = z.as_deref_mut() {
                        rotate_rows(z, n, i, c, s);
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += shift_total;
        e[l] = 0.0;
    }
    Ok(())
}

#[inline]
fn rotate_rows(z: &mut [f64], n: usize, i: usize, c: f64, s: f64) {
    let (head, tail) = z.split_at_mut((i + 1) * n);
    let a = &mut head[i * n..];
    let b = &mut tail[..n];
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let h = *y;
        *y = s * *x + c * h;
        *x = c * *x - s * h;
    }
}

fn sorted_spectrum(d: Vec<f64>, z: Vec<f64>) -> Spectrum {
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    // stable on ties so identical inputs give identical outputs
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let mut vectors = vec![0.0; n * n];
    let mut eigenvalues = Vec::with_capacity(n);
    for (row, &src) in order.iter().enumerate() {
        eigenvalues.push(d[src]);
        vectors[row * n..(row + 1) * n].copy_from_slice(&z[src * n..(src + 1) * n]);
    }
    Spectrum::from_parts(eigenvalues, vectors)
}

/// Modified Gram–Schmidt, in index order, inside each cluster of nearly
/// equal eigenvalues.
fn reorthonormalize_clusters(spec: &mut Spectrum) {
    let n = spec.dim();
    if n == 0 {
        return;
    }
    let scale = spec.spectral_radius().max(f64::MIN_POSITIVE);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && spec.eigenvalues[end] - spec.eigenvalues[end - 1] < CLUSTER_GAP * scale {
            end += 1;
        }
        if end - start > 1 {
            for j in start..end {
                for i in start..j {
                    let (head, tail) = spec.vectors.split_at_mut(j * n);
                    let vi = &head[i * n..(i + 1) * n];
                    let vj = &mut tail[..n];
                    let dot: f64 = vi.iter().zip(vj.iter()).map(|(a, b)| a * b).sum();
                    for (b, &a) in vj.iter_mut().zip(vi) {
                        *b -= dot * a;
                    }
                }
                let vj = &mut spec.vectors[j * n..(j + 1) * n];
                let norm = vj.iter().map(|x| x * x).sum::<f64>().sqrt();
                for x in vj.iter_mut() {
                    *x /= norm;
                }
            }
        }
        start = end;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::TwoParticleBasis;
    use crate::hamiltonian::{build_momentum_block, build_sector_hamiltonian};

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn two_by_two() {
        let j = 0.75;
        let s = eig_dense(&[0.0, -j, -j, 0.0], 2).unwrap();
        assert!((s.eigenvalues[0] + j).abs() < 1e-15);
        assert!((s.eigenvalues[1] - j).abs() < 1e-15);
        assert!(s.orthonormality_error() < 1e-15);
    }

    /// Real roots of a monic cubic by the trigonometric formula.
    fn cubic_roots(b: f64, c: f64, d: f64) -> [f64; 3] {
        let p = c - b * b / 3.0;
        let q = 2.0 * b.powi(3) / 27.0 - b * c / 3.0 + d;
        let m = 2.0 * (-p / 3.0).sqrt();
        let phi = (3.0 * q / (p * m)).acos() / 3.0;
        let mut roots = [0.0; 3];
        for (k, root) in roots.iter_mut().enumerate() {
            *root = m * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - b / 3.0;
        }
        roots.sort_by(f64::total_cmp);
        roots
    }

    #[test]
    fn three_site_sector_matches_cubic() {
        let (j, h) = (1.0, 1.0);
        let basis = TwoParticleBasis::new(3).unwrap();
        let op = build_sector_hamiltonian(&basis, j, h).unwrap();
        let spec = eig_symmetric(&op).unwrap();
        // det(lambda - H) for H = [[2h,0,-j],[0,2h,-j],[-j,-j,4h]]:
        // (l-2h)[(l-2h)(l-4h) - 2j^2]
        let a = 2.0 * h;
        let bq = 4.0 * h;
        let (b, c, d) = (-(2.0 * a + bq), a * a + 2.0 * a * bq - 2.0 * j * j, -(a * a * bq - 2.0 * a * j * j));
        let roots = cubic_roots(b, c, d);
        for (x, y) in spec.eigenvalues.iter().zip(&roots) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn diagonal_block_is_exact() {
        let blk = build_momentum_block(std::f64::consts::PI, 1.0, 0.9, 15).unwrap();
        let s = eig_symmetric(&blk.to_sparse()).unwrap();
        for (i, e) in s.eigenvalues.iter().enumerate() {
            assert_eq!(*e, 2.0 * 0.9 * (i + 1) as f64);
        }
        let t = eig_tridiagonal(&blk).unwrap();
        assert_eq!(t.eigenvalues, s.eigenvalues);
    }

    #[test]
    fn tridiagonal_matches_dense() {
        for &(k, h) in &[(0.0, 0.3), (1.1, 2.0), (2.5, 0.05)] {
            let blk = build_momentum_block(k, 1.0, h, 80).unwrap();
            let t = eig_tridiagonal(&blk).unwrap();
            let d = eig_dense(&blk.to_dense(), blk.dim()).unwrap();
            assert!(max_abs_diff(&t.eigenvalues, &d.eigenvalues) < 1e-10);
            let vals = eigenvalues_tridiagonal(&blk).unwrap();
            assert!(max_abs_diff(&t.eigenvalues, &vals) < 1e-10);
        }
    }

    #[test]
    fn wannier_stark_eigenvectors_peak_on_their_level() {
        let (j, h, k) = (1.0, 5.0, 0.0);
        let blk = build_momentum_block(k, j, h, 40).unwrap();
        let t = eig_tridiagonal(&blk).unwrap();
        let expected = 2.0 * j * (k / 2.0f64).cos() / (2.0 * h);
        for n in 1..=5 {
            let v = t.eigenvector(n - 1);
            let peak = (0..v.len()).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap();
            assert_eq!(peak + 1, n);
            let ratio = (v[n] / v[n - 1]).abs();
            assert!((ratio - expected).abs() < 0.2 * expected, "n={n}: {ratio} vs {expected}");
        }
    }

    #[test]
    fn spectral_reconstruction_and_orthonormality() {
        for (l, h) in [(8, 0.4), (14, 1.1), (32, 0.7)] {
            let basis = TwoParticleBasis::new(l).unwrap();
            let op = build_sector_hamiltonian(&basis, 1.0, h).unwrap();
            let s = eig_symmetric(&op).unwrap();
            assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
            assert!(s.orthonormality_error() < 1e-9);
            let scale = s.spectral_radius();
            assert!(s.max_residual < 1e-8 * scale);
            assert!(max_abs_diff(&s.reconstruct(), &op.to_dense()) < 1e-8 * scale);
        }
    }

    #[test]
    fn split_solver_matches_plain_solver() {
        for (l, j, h) in [(2, 1.0, 0.5), (7, 1.0, 0.9), (10, 0.6, 1.1), (16, 1.0, 0.3)] {
            let basis = TwoParticleBasis::new(l).unwrap();
            let op = build_sector_hamiltonian(&basis, j, h).unwrap();
            let plain = eig_symmetric(&op).unwrap();
            let split =
                eig_symmetric_split(&op, &basis.mirror_permutation(), &EigenConfig::default()).unwrap();
            assert!(max_abs_diff(&plain.eigenvalues, &split.eigenvalues) < 1e-10);
            assert!(split.orthonormality_error() < 1e-9);
            assert!(split.max_residual < 1e-8 * split.spectral_radius());
        }
    }

    #[test]
    fn degenerate_spectrum_stays_orthonormal() {
        // no hopping: eigenvalue 2hr with multiplicity L - r
        let basis = TwoParticleBasis::new(12).unwrap();
        let op = build_sector_hamiltonian(&basis, 0.0, 0.8).unwrap();
        let s = eig_symmetric(&op).unwrap();
        assert!(s.orthonormality_error() < 1e-12);
        let split = eig_symmetric_split(&op, &basis.mirror_permutation(), &EigenConfig::default()).unwrap();
        assert!(split.orthonormality_error() < 1e-12);
        assert!(max_abs_diff(&s.eigenvalues, &split.eigenvalues) < 1e-13);
    }

    #[test]
    fn deterministic_output() {
        let basis = TwoParticleBasis::new(20).unwrap();
        let op = build_sector_hamiltonian(&basis, 1.0, 0.6).unwrap();
        let a = eig_symmetric(&op).unwrap();
        let b = eig_symmetric(&op).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
        assert_eq!(a.vectors_by_row(), b.vectors_by_row());
    }

    #[test]
    fn capacity_limit() {
        let basis = TwoParticleBasis::new(10).unwrap();
        let op = build_sector_hamiltonian(&basis, 1.0, 1.0).unwrap();
        let err = eig_symmetric_with(&op, &EigenConfig { dense_limit: 20 }).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)));
    }

    #[test]
    fn rejects_bad_symmetry() {
        let basis = TwoParticleBasis::new(5).unwrap();
        let op = build_sector_hamiltonian(&basis, 1.0, 1.0).unwrap();
        let mut perm: Vec<usize> = (0..op.dim()).collect();
        perm.swap(0, 9);
        assert!(eig_symmetric_split(&op, &perm, &EigenConfig::default()).is_err());
    }
}
