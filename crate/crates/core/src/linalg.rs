//! Dense kernels used by model fitting: truncated SVD, seeded Gaussian
//! sampling and Householder QR with Haar sign correction.
//!
//! All fitting math is done in `f64`; conversion to `f32` happens only when
//! models and embeddings are written to disk.

use std::ops::{Index, IndexMut};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Sweep limit for the one-sided Jacobi SVD.
pub const MAX_SWEEPS: usize = 100;
/// Largest normalized column inner product accepted as converged.
pub const JACOBI_TOLERANCE: f64 = 1e-10;
/// Pivots of R below this fraction of ‖A‖_F mark the input as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Row-major matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (l, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (d, &b) in dst.iter_mut().zip(other.row(l)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · x` for a column vector `x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `selfᵀ · x` without materializing the transpose.
    pub fn transpose_mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: x.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// max |(MᵀM − I)_ij|, the column-orthonormality defect.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..self.cols {
            for b in a..self.cols {
                let mut s = 0.0;
                for i in 0..self.rows {
                    s += self[(i, a)] * self[(i, b)];
                }
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Round every entry through `f32`, the precision of the file formats.
    pub fn round_to_f32(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v as f32 as f64).collect(),
        }
    }

    fn to_col_major(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self[(i, j)];
            }
        }
        out
    }

    fn from_col_major(rows: usize, cols: usize, data: &[f64]) -> Self {
        Self::from_fn(rows, cols, |i, j| data[j * rows + i])
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Truncated singular value decomposition `X ≈ U diag(S) Vᵀ`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// n×k left singular vectors.
    pub u: DenseMatrix,
    /// k singular values, non-increasing.
    pub s: Vec<f64>,
    /// d×k right singular vectors with orthonormal columns.
    pub v: DenseMatrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.u.rows();
        let d = self.v.rows();
        DenseMatrix::from_fn(n, d, |i, j| {
            (0..self.s.len())
                .map(|l| self.u[(i, l)] * self.s[l] * self.v[(j, l)])
                .sum()
        })
    }
}

/// Top-`k` singular triplets of `x`.
///
/// The matrix is first reduced to a square triangular factor with Householder
/// QR (on `x` or `xᵀ`, whichever is taller), then that factor is diagonalized
/// by one-sided Jacobi rotations. No randomization is involved.
pub fn truncated_svd(x: &DenseMatrix, k: usize) -> Result<SvdResult> {
    let (n, d) = (x.rows(), x.cols());
    let max = n.min(d);
    if k == 0 || k > max {
        return Err(Error::RankOutOfRange { k, max });
    }
    if let Some(pos) = x.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: pos / d,
            col: pos % d,
        });
    }

    let tall = n >= d;
    let work = if tall { x.clone() } else { x.transpose() };
    let m = work.rows();
    let w = work.cols();
    let mut a = work.to_col_major();
    let reflectors = householder_in_place(&mut a, m, w);
    let mut r = vec![0.0; w * w];
    for j in 0..w {
        for i in 0..=j {
            r[j * w + i] = a[j * m + i];
        }
    }

    let (b, rot) = one_sided_jacobi(&mut r, w)?;
    let norms: Vec<f64> = (0..w)
        .map(|j| {
            b[j * w..(j + 1) * w]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut order: Vec<usize> = (0..w).collect();
    order.sort_by(|&p, &q| norms[q].total_cmp(&norms[p]).then(p.cmp(&q)));
    let order = &order[..k];
    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();

    let mut left = Vec::with_capacity(k);
    for &j in order {
        let col = &b[j * w..(j + 1) * w];
        let nrm = norms[j];
        if nrm > 0.0 {
            left.push(col.iter().map(|v| v / nrm).collect::<Vec<_>>());
        } else {
            left.push(vec![0.0; w]);
        }
    }
    complete_orthonormal(&mut left, w);
    let right: Vec<Vec<f64>> = order
        .iter()
        .map(|&j| rot[j * w..(j + 1) * w].to_vec())
        .collect();

    if tall {
        // X = Q R, R = L S Jᵀ  =>  V = J, U = X V / S.
        let v = columns_to_matrix(&right, d);
        let u = left_vectors(x, &v, &s);
        Ok(SvdResult { u, s, v })
    } else {
        // Xᵀ = Q R, R = L S Jᵀ  =>  V = Q L, U = J.
        let mut v_cols = Vec::with_capacity(k);
        for col in &left {
            let mut full = vec![0.0; m];
            full[..w].copy_from_slice(col);
            apply_q(&a, m, &reflectors, &mut full);
            v_cols.push(full);
        }
        let v = columns_to_matrix(&v_cols, d);
        let u = columns_to_matrix(&right, n);
        Ok(SvdResult { u, s, v })
    }
}

fn columns_to_matrix(cols: &[Vec<f64>], rows: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

fn left_vectors(x: &DenseMatrix, v: &DenseMatrix, s: &[f64]) -> DenseMatrix {
    let n = x.rows();
    let k = s.len();
    let mut u = DenseMatrix::zeros(n, k);
    for i in 0..n {
        let row = x.row(i);
        for l in 0..k {
            if s[l] > 0.0 {
                let mut acc = 0.0;
                for (j, &xv) in row.iter().enumerate() {
                    acc += xv * v[(j, l)];
                }
                u[(i, l)] = acc / s[l];
            }
        }
    }
    u
}

/// Replace zero columns with unit vectors orthogonal to the rest.
fn complete_orthonormal(cols: &mut [Vec<f64>], dim: usize) {
    let zero: Vec<usize> = cols
        .iter()
        .enumerate()
        .filter(|(_, c)| c.iter().all(|&v| v == 0.0))
        .map(|(i, _)| i)
        .collect();
    let mut candidate = 0;
    for idx in zero {
        while candidate < dim {
            let mut e = vec![0.0; dim];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for (j, c) in cols.iter().enumerate() {
                    if j == idx {
                        continue;
                    }
                    let p = dot(&e, c);
                    for (ev, cv) in e.iter_mut().zip(c) {
                        *ev -= p * cv;
                    }
                }
            }
            let nrm = dot(&e, &e).sqrt();
            if nrm > 1e-6 {
                cols[idx] = e.into_iter().map(|v| v / nrm).collect();
                break;
            }
        }
    }
}

/// Householder QR on a column-major m×n buffer (m ≥ n). On return the upper
/// triangle holds R and the strict lower part holds the reflector tails; the
/// returned vector holds the reflector heads and scale factors.
fn householder_in_place(a: &mut [f64], m: usize, n: usize) -> Vec<(f64, f64)> {
    let mut reflectors = Vec::with_capacity(n);
    for j in 0..n {
        let (head, tail) = a.split_at_mut((j + 1) * m);
        let col = &mut head[j * m..];
        let norm = col[j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            reflectors.push((0.0, 0.0));
            continue;
        }
        let alpha = if col[j] >= 0.0 { -norm } else { norm };
        let v0 = col[j] - alpha;
        let vnorm2 = v0 * v0 + col[j + 1..].iter().map(|v| v * v).sum::<f64>();
        let beta = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };
        for l in 0..(n - j - 1) {
            let other = &mut tail[l * m..(l + 1) * m];
            let mut s = v0 * other[j];
            for i in j + 1..m {
                s += col[i] * other[i];
            }
            let f = beta * s;
            other[j] -= f * v0;
            for i in j + 1..m {
                other[i] -= f * col[i];
            }
        }
        col[j] = alpha;
        reflectors.push((v0, beta));
    }
    reflectors
}

/// x ← Q x, with Q the product of the stored reflectors.
fn apply_q(a: &[f64], m: usize, reflectors: &[(f64, f64)], x: &mut [f64]) {
    for (j, &(v0, beta)) in reflectors.iter().enumerate().rev() {
        if beta == 0.0 {
            continue;
        }
        let col = &a[j * m..(j + 1) * m];
        let mut s = v0 * x[j];
        for i in j + 1..m {
            s += col[i] * x[i];
        }
        let f = beta * s;
        x[j] -= f * v0;
        for i in j + 1..m {
            x[i] -= f * col[i];
        }
    }
}

/// Orthogonalize the columns of a column-major w×w matrix. Returns the
/// rotated matrix (orthogonal columns) and the accumulated rotation.
fn one_sided_jacobi(b: &mut [f64], w: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rot = vec![0.0; w * w];
    for j in 0..w {
        rot[j * w + j] = 1.0;
    }
    let mut b = b.to_vec();
    let scale: f64 = b.iter().map(|v| v * v).sum::<f64>();
    // Columns this small relative to the matrix are numerically zero.
    let tiny = scale * f64::EPSILON * f64::EPSILON * 1e-4;
    let mut residual = f64::INFINITY;
    for _sweep in 0..MAX_SWEEPS {
        residual = 0.0;
        for p in 0..w.saturating_sub(1) {
            for q in p + 1..w {
                let (lo, hi) = b.split_at_mut(q * w);
                let bp = &mut lo[p * w..(p + 1) * w];
                let bq = &mut hi[..w];
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for (x, y) in bp.iter().zip(bq.iter()) {
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if alpha <= tiny || beta <= tiny || gamma == 0.0 {
                    continue;
                }
                let off = gamma.abs() / (alpha * beta).sqrt();
                residual = residual.max(off);
                if off <= f64::EPSILON {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(bp, bq, c, s);
                let (rlo, rhi) = rot.split_at_mut(q * w);
                rotate(&mut rlo[p * w..(p + 1) * w], &mut rhi[..w], c, s);
            }
        }
        if residual <= JACOBI_TOLERANCE {
            return Ok((b, rot));
        }
    }
    Err(Error::NoConvergence {
        sweeps: MAX_SWEEPS,
        residual,
    })
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let xa = *a;
        let yb = *b;
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// Seeded ChaCha20 stream mapped to standard normal variates.
fn normal_stream(seed: u64) -> impl Iterator<Item = f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    std::iter::repeat_with(move || StandardNormal.sample(&mut rng))
}

/// k×k matrix of i.i.d. N(0, 1) entries, filled row-major from a seeded
/// stream. Identical `(k, seed)` always produce identical matrices.
pub fn gaussian_matrix(k: usize, seed: u64) -> DenseMatrix {
    gaussian_rect(k, k, seed)
}

pub fn gaussian_rect(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let data: Vec<f64> = normal_stream(seed).take(rows * cols).collect();
    DenseMatrix { rows, cols, data }
}

/// Q factor of `a = QR` with `diag(R) > 0`, for square or tall `a`.
///
/// Fixing the sign of R's diagonal makes Q a deterministic function of `a`,
/// which turns a Gaussian input into a Haar-distributed orthogonal matrix.
pub fn qr_orthogonal(a: &DenseMatrix) -> Result<DenseMatrix> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(Error::InvalidArgument(format!(
            "qr_orthogonal needs rows >= cols, got {m}x{n}"
        )));
    }
    if let Some(pos) = a.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: pos / n,
            col: pos % n,
        });
    }
    let norm = a.frobenius_norm();
    let mut work = a.to_col_major();
    let reflectors = householder_in_place(&mut work, m, n);
    let mut signs = Vec::with_capacity(n);
    for j in 0..n {
        let pivot = work[j * m + j];
        if pivot.abs() < RANK_TOLERANCE * norm || norm == 0.0 {
            return Err(Error::Degenerate { column: j, pivot });
        }
        signs.push(pivot.signum());
    }
    let mut q = vec![0.0; m * n];
    for j in 0..n {
        let col = &mut q[j * m..(j + 1) * m];
        col[j] = 1.0;
        apply_q(&work, m, &reflectors, col);
        if signs[j] < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(DenseMatrix::from_col_major(m, n, &q))
}

/// Haar-random k×k rotation drawn from `seed`.
pub fn random_orthogonal(k: usize, seed: u64) -> Result<DenseMatrix> {
    qr_orthogonal(&gaussian_matrix(k, seed))
}
