//! Hash model fitting and the embedding → probability → code mapping.
//!
//! A fitted [`HashModel`] carries the preprocessing flags, the training mean,
//! a d×k PCA basis `V` and a k×k orthogonal rotation `R`. Projection computes
//! `p = σ(R Vᵀ pre(x))`; codes threshold `p` strictly above one half.

use rayon::prelude::*;

use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::index::{BinaryCode, CodeDatabase};
use crate::linalg::{self, DenseMatrix};

/// Embedding preprocessing applied before projection, at fit and query time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PreprocessFlags {
    pub l2_normalize: bool,
    pub mean_center: bool,
}

impl Default for PreprocessFlags {
    fn default() -> Self {
        Self {
            l2_normalize: true,
            mean_center: true,
        }
    }
}

impl PreprocessFlags {
    pub fn to_bits(self) -> u8 {
        (self.l2_normalize as u8) | (self.mean_center as u8) << 1
    }

    pub fn from_bits(bits: u8) -> Self {
        Self {
            l2_normalize: bits & 1 != 0,
            mean_center: bits & 2 != 0,
        }
    }
}

/// Per-bit probabilities, every entry in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct BitProbabilities(Vec<f64>);

impl BitProbabilities {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((bit, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidProbability { bit, value });
        }
        Ok(Self(values))
    }

    /// Entry-wise logistic of `logits`.
    pub fn from_logits(logits: &[f64]) -> Self {
        Self(logits.iter().map(|&u| sigmoid(u)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Numerically stable logistic function.
///
/// The result is kept strictly on the same side of 0.5 as `u`, so that
/// thresholding `sigmoid(u) > 0.5` agrees with `u > 0` even where the exact
/// value would round to 0.5.
pub fn sigmoid(u: f64) -> f64 {
    let p = if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    };
    if u > 0.0 {
        p.max(0.5f64.next_up())
    } else if u < 0.0 {
        p.min(0.5f64.next_down())
    } else {
        p.clamp(0.0, 1.0)
    }
}

/// Bit `j` is set iff `p_j > 0.5`.
pub fn binarize(p: &BitProbabilities) -> BinaryCode {
    let mut code = BinaryCode::zeros(p.len());
    for (j, &v) in p.values().iter().enumerate() {
        if v > 0.5 {
            code.set(j, true);
        }
    }
    code
}

/// Fitted hashing model.
#[derive(Debug, Clone, PartialEq)]
pub struct HashModel {
    flags: PreprocessFlags,
    mean: Vec<f64>,
    basis: DenseMatrix,
    rotation: DenseMatrix,
    seed: u64,
}

impl HashModel {
    /// Assemble a model from parts, checking shapes and finiteness.
    pub fn from_parts(
        flags: PreprocessFlags,
        mean: Vec<f64>,
        basis: DenseMatrix,
        rotation: DenseMatrix,
        seed: u64,
    ) -> Result<Self> {
        let (d, k) = (basis.rows(), basis.cols());
        if k == 0 || k > d {
            return Err(Error::RankOutOfRange { k, max: d });
        }
        if mean.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: mean.len(),
            });
        }
        if rotation.rows() != k || rotation.cols() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: rotation.rows().max(rotation.cols()),
            });
        }
        if let Some(col) = mean.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: 0, col });
        }
        Ok(Self {
            flags,
            mean,
            basis,
            rotation,
            seed,
        })
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.basis.rows()
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.basis.cols()
    }

    pub fn flags(&self) -> PreprocessFlags {
        self.flags
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// d×k PCA basis.
    pub fn basis(&self) -> &DenseMatrix {
        &self.basis
    }

    /// k×k rotation.
    pub fn rotation(&self) -> &DenseMatrix {
        &self.rotation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Same basis and mean, rotation redrawn from `seed`.
    pub fn with_rotation_seed(&self, seed: u64) -> Result<Self> {
        Ok(Self {
            rotation: linalg::random_orthogonal(self.k(), seed)?,
            seed,
            ..self.clone()
        })
    }

    /// Same basis and mean with `R = I`.
    pub fn without_rotation(&self) -> Self {
        Self {
            rotation: DenseMatrix::identity(self.k()),
            ..self.clone()
        }
    }

    /// Apply L2 normalization and mean subtraction per the model flags.
    pub fn preprocess(&self, x: &[f32]) -> Result<Vec<f64>> {
        self.preprocess_row(x, 0)
    }

    fn preprocess_row(&self, x: &[f32], row: usize) -> Result<Vec<f64>> {
        if x.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                found: x.len(),
            });
        }
        let mut v = preprocess_raw(x, self.flags.l2_normalize, row)?;
        if self.flags.mean_center {
            for (a, m) in v.iter_mut().zip(&self.mean) {
                *a -= m;
            }
        }
        Ok(v)
    }

    /// PCA coordinates `z = Vᵀ pre(x)`.
    pub fn reduce(&self, x: &[f32]) -> Result<Vec<f64>> {
        let v = self.preprocess(x)?;
        self.basis.transpose_mul_vec(&v)
    }

    /// Rotated coordinates `u = R z`.
    pub fn logits(&self, x: &[f32]) -> Result<Vec<f64>> {
        self.logits_row(x, 0)
    }

    fn logits_row(&self, x: &[f32], row: usize) -> Result<Vec<f64>> {
        let v = self.preprocess_row(x, row)?;
        let z = self.basis.transpose_mul_vec(&v)?;
        self.rotation.mul_vec(&z)
    }

    /// `σ(R Vᵀ pre(x))`.
    pub fn project(&self, x: &[f32]) -> Result<BitProbabilities> {
        Ok(BitProbabilities::from_logits(&self.logits(x)?))
    }

    /// Project every row, preserving order.
    pub fn project_batch(&self, x: &EmbeddingMatrix) -> Result<Vec<BitProbabilities>> {
        self.check_cols(x)?;
        (0..x.n())
            .into_par_iter()
            .map(|i| {
                Ok(BitProbabilities::from_logits(
                    &self.logits_row(x.row(i), i)?,
                ))
            })
            .collect()
    }

    /// PCA coordinates of every row, as an n×k matrix.
    pub fn reduce_batch(&self, x: &EmbeddingMatrix) -> Result<DenseMatrix> {
        self.check_cols(x)?;
        let rows: Vec<Vec<f64>> = (0..x.n())
            .into_par_iter()
            .map(|i| {
                let v = self.preprocess_row(x.row(i), i)?;
                self.basis.transpose_mul_vec(&v)
            })
            .collect::<Result<_>>()?;
        DenseMatrix::new(x.n(), self.k(), rows.concat())
    }

    pub fn encode(&self, x: &[f32]) -> Result<BinaryCode> {
        Ok(binarize(&self.project(x)?))
    }

    /// Binary codes of every row, in input order.
    pub fn encode_batch(&self, x: &EmbeddingMatrix) -> Result<CodeDatabase> {
        let codes: Vec<BinaryCode> = self.project_batch(x)?.iter().map(binarize).collect();
        CodeDatabase::from_codes(self.k(), &codes)
    }

    fn check_cols(&self, x: &EmbeddingMatrix) -> Result<()> {
        if x.d() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                found: x.d(),
            });
        }
        Ok(())
    }
}

fn preprocess_raw(x: &[f32], l2: bool, row: usize) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = x.iter().map(|&a| a as f64).collect();
    if let Some(col) = v.iter().position(|a| !a.is_finite()) {
        return Err(Error::NonFinite { row, col });
    }
    if l2 {
        let norm = linalg::dot(&v, &v).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroVector { row });
        }
        v.iter_mut().for_each(|a| *a /= norm);
    }
    Ok(v)
}

/// Preprocessed (normalized, uncentered) training rows and their mean.
fn training_matrix(x: &EmbeddingMatrix, flags: PreprocessFlags) -> Result<(DenseMatrix, Vec<f64>)> {
    let (n, d) = (x.n(), x.d());
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        data.extend(preprocess_raw(x.row(i), flags.l2_normalize, i)?);
    }
    let mut mean = vec![0.0; d];
    if flags.mean_center && n > 0 {
        for row in data.chunks(d) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        for row in data.chunks_mut(d) {
            for (v, m) in row.iter_mut().zip(&mean) {
                *v -= m;
            }
        }
    }
    Ok((DenseMatrix::new(n, d, data)?, mean))
}

fn check_fit_args(x: &EmbeddingMatrix, k: usize) -> Result<()> {
    if x.n() < 2 {
        return Err(Error::TooFewRows { n: x.n() });
    }
    let max = x.n().min(x.d());
    if k == 0 || k > max {
        return Err(Error::RankOutOfRange { k, max });
    }
    Ok(())
}

/// Result of [`fit_with_spectrum`]: the model and the fraction of training
/// variance captured by its k components.
#[derive(Debug, Clone)]
pub struct FitSummary {
    pub model: HashModel,
    pub singular_values: Vec<f64>,
    pub explained_variance: f64,
}

/// Fit PCA basis and rotation on training embeddings.
pub fn fit(x: &EmbeddingMatrix, k: usize, seed: u64, flags: PreprocessFlags) -> Result<HashModel> {
    fit_with_spectrum(x, k, seed, flags).map(|s| s.model)
}

pub fn fit_with_spectrum(
    x: &EmbeddingMatrix,
    k: usize,
    seed: u64,
    flags: PreprocessFlags,
) -> Result<FitSummary> {
    check_fit_args(x, k)?;
    let (xc, mean) = training_matrix(x, flags)?;
    let total = xc.frobenius_norm().powi(2);
    let svd = linalg::truncated_svd(&xc, k)?;
    let captured: f64 = svd.s.iter().map(|s| s * s).sum();
    let rotation = linalg::random_orthogonal(k, seed)?;
    let model = HashModel::from_parts(flags, mean, svd.v, rotation, seed)?;
    Ok(FitSummary {
        model,
        explained_variance: if total > 0.0 { captured / total } else { 0.0 },
        singular_values: svd.s,
    })
}

/// Random orthogonal projection without PCA: `V` is a d×k matrix with
/// orthonormal columns drawn from `seed` and `R = I`, so codes are signs of a
/// k×d row-orthonormal random projection of the (optionally L2-normalized)
/// embeddings. Mean-centering belongs to PCA and is not applied.
pub fn fit_random_projection(
    x: &EmbeddingMatrix,
    k: usize,
    seed: u64,
    flags: PreprocessFlags,
) -> Result<HashModel> {
    check_fit_args(x, k)?;
    let flags = PreprocessFlags {
        mean_center: false,
        ..flags
    };
    // Validates rows (finite, nonzero under L2) like a regular fit.
    training_matrix(x, flags)?;
    let basis = linalg::qr_orthogonal(&linalg::gaussian_rect(x.d(), k, seed))?;
    HashModel::from_parts(
        flags,
        vec![0.0; x.d()],
        basis,
        DenseMatrix::identity(k),
        seed,
    )
}
