//! Seeded synthetic embeddings with class structure and an anisotropic
//! spectrum, standing in for real encoder outputs.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::eval::LabelSet;
use crate::linalg::{self, DenseMatrix};

/// Isotropic noise in every ambient dimension, relative to `intra_spread`.
pub const ISOTROPIC_RESIDUE: f64 = 1e-3;
/// Per-dimension variance ratio inside the intrinsic subspace.
pub const SPECTRUM_DECAY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub n_classes: usize,
    pub per_class: usize,
    pub d: usize,
    /// Standard deviation of the within-class noise along the leading
    /// intrinsic direction.
    pub intra_spread: f64,
    /// Norm of every class centroid before the shared offset.
    pub inter_scale: f64,
    pub intrinsic_dim: usize,
    /// Norm of a random offset shared by every item (0 for none). A large
    /// offset confines the data to a narrow cone, as with real encoders.
    pub offset_scale: f64,
    pub seed: u64,
}

impl ClusterSpec {
    /// 10 classes of `per_class` items in 512 dimensions with a 40-dimensional
    /// intrinsic subspace.
    pub fn benchmark(per_class: usize, seed: u64) -> Self {
        Self {
            n_classes: 10,
            per_class,
            d: 512,
            intra_spread: 0.15,
            inter_scale: 1.0,
            intrinsic_dim: 40,
            offset_scale: 0.0,
            seed,
        }
    }

    /// [`ClusterSpec::benchmark`] shifted by a shared offset of norm
    /// `offset_scale`.
    pub fn anisotropic(per_class: usize, offset_scale: f64, seed: u64) -> Self {
        Self {
            offset_scale,
            ..Self::benchmark(per_class, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.per_class == 0 || self.d == 0 || self.intrinsic_dim == 0 {
            return Err(Error::InvalidArgument(
                "cluster counts must be at least 1".into(),
            ));
        }
        if self.intrinsic_dim > self.d {
            return Err(Error::InvalidArgument(format!(
                "intrinsic_dim {} exceeds d {}",
                self.intrinsic_dim, self.d
            )));
        }
        if !(self.intra_spread >= 0.0 && self.inter_scale > 0.0 && self.offset_scale >= 0.0) {
            return Err(Error::InvalidArgument(
                "intra_spread and offset_scale must be >= 0, inter_scale > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_classes * self.per_class
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Generated data together with the class centroids used to place it.
#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub embeddings: EmbeddingMatrix,
    pub labels: LabelSet,
    /// n_classes × d.
    pub centroids: DenseMatrix,
}

struct Generator {
    rng: ChaCha20Rng,
    subspace: DenseMatrix,
    scales: Vec<f64>,
    centroids: DenseMatrix,
    iso_scale: f64,
    spec: ClusterSpec,
}

impl Generator {
    fn new(spec: &ClusterSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
        let (d, m) = (spec.d, spec.intrinsic_dim);
        let raw = DenseMatrix::from_fn(d, m, |_, _| StandardNormal.sample(&mut rng));
        let subspace = linalg::qr_orthogonal(&raw)?;
        let scales = (0..m)
            .map(|i| spec.intra_spread * SPECTRUM_DECAY.powi(i as i32).sqrt())
            .collect();
        let mut centroids = DenseMatrix::zeros(spec.n_classes, d);
        for c in 0..spec.n_classes {
            let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = linalg::dot(&g, &g).sqrt();
            for (j, v) in g.iter().enumerate() {
                centroids[(c, j)] = spec.inter_scale * v / norm;
            }
        }
        if spec.offset_scale > 0.0 {
            let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = linalg::dot(&g, &g).sqrt();
            for c in 0..spec.n_classes {
                for (j, v) in g.iter().enumerate() {
                    centroids[(c, j)] += spec.offset_scale * v / norm;
                }
            }
        }
        Ok(Self {
            rng,
            subspace,
            scales,
            centroids,
            iso_scale: ISOTROPIC_RESIDUE * spec.intra_spread,
            spec: spec.clone(),
        })
    }

    fn item(&mut self, center: &[f64]) -> Vec<f32> {
        let d = self.spec.d;
        let coeffs: Vec<f64> = self
            .scales
            .iter()
            .map(|s| {
                let g: f64 = StandardNormal.sample(&mut self.rng);
                s * g
            })
            .collect();
        let noise = self.subspace.mul_vec(&coeffs).expect("subspace width");
        (0..d)
            .map(|j| {
                let iso: f64 = StandardNormal.sample(&mut self.rng);
                (center[j] + noise[j] + self.iso_scale * iso) as f32
            })
            .collect()
    }
}

/// `per_class` items per class, grouped by class in ascending class order.
pub fn generate(spec: &ClusterSpec) -> Result<SyntheticSet> {
    let mut g = Generator::new(spec)?;
    let mut data = Vec::with_capacity(spec.len() * spec.d);
    let mut ids = Vec::with_capacity(spec.len());
    for c in 0..spec.n_classes {
        let center = g.centroids.row(c).to_vec();
        for _ in 0..spec.per_class {
            data.extend(g.item(&center));
            ids.push(c as u32);
        }
    }
    Ok(SyntheticSet {
        embeddings: EmbeddingMatrix::new(spec.len(), spec.d, data)?,
        labels: LabelSet::single(spec.n_classes as u32, &ids)?,
        centroids: g.centroids,
    })
}

/// Multi-label variant: every item carries 1..=`max_labels` distinct classes
/// (uniform count) and sits at the mean of their centroids plus noise.
pub fn generate_multilabel(spec: &ClusterSpec, max_labels: usize) -> Result<SyntheticSet> {
    let max_labels = max_labels.clamp(1, spec.n_classes.max(1));
    let mut g = Generator::new(spec)?;
    let mut data = Vec::with_capacity(spec.len() * spec.d);
    let mut rows = Vec::with_capacity(spec.len());
    let all: Vec<u32> = (0..spec.n_classes as u32).collect();
    for _ in 0..spec.len() {
        let count = g.rng.random_range(1..=max_labels);
        let mut chosen: Vec<u32> = all.choose_multiple(&mut g.rng, count).copied().collect();
        chosen.sort_unstable();
        let mut center = vec![0.0; spec.d];
        for &c in &chosen {
            for (a, b) in center.iter_mut().zip(g.centroids.row(c as usize)) {
                *a += b / count as f64;
            }
        }
        data.extend(g.item(&center));
        rows.push(chosen);
    }
    Ok(SyntheticSet {
        embeddings: EmbeddingMatrix::new(spec.len(), spec.d, data)?,
        labels: LabelSet::new(spec.n_classes as u32, rows)?,
        centroids: g.centroids,
    })
}

/// Disjoint database/query partition of a labelled set.
#[derive(Debug, Clone)]
pub struct Split {
    pub database: EmbeddingMatrix,
    pub database_labels: LabelSet,
    pub queries: EmbeddingMatrix,
    pub query_labels: LabelSet,
    /// Source row of every database item.
    pub database_ids: Vec<usize>,
    /// Source row of every query.
    pub query_ids: Vec<usize>,
}

/// Stratified split on each item's smallest class id. Every class gives
/// `round(fraction · count)` queries, clamped so that both sides get at
/// least one item.
pub fn split(
    x: &EmbeddingMatrix,
    labels: &LabelSet,
    query_fraction: f64,
    seed: u64,
) -> Result<Split> {
    if !(query_fraction > 0.0 && query_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "query fraction {query_fraction} must be in (0, 1)"
        )));
    }
    if labels.len() != x.n() {
        return Err(Error::LabelMismatch {
            what: "labels",
            expected: x.n(),
            found: labels.len(),
        });
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); labels.classes() as usize];
    for i in 0..x.n() {
        by_class[labels.row(i)[0] as usize].push(i);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut query_ids = Vec::new();
    let mut database_ids = Vec::new();
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "class {class} has {} item(s); need at least 2 to split",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let nq =
            ((query_fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        query_ids.extend_from_slice(&members[..nq]);
        database_ids.extend_from_slice(&members[nq..]);
    }
    query_ids.sort_unstable();
    database_ids.sort_unstable();
    Ok(Split {
        database: x.select(&database_ids),
        database_labels: labels.select(&database_ids),
        queries: x.select(&query_ids),
        query_labels: labels.select(&query_ids),
        database_ids,
        query_ids,
    })
}

/// Fraction of items whose nearest centroid (Euclidean) is their own class.
pub fn nearest_centroid_accuracy(set: &SyntheticSet) -> f64 {
    let x = &set.embeddings;
    let mut correct = 0;
    for i in 0..x.n() {
        let row: Vec<f64> = x.row(i).iter().map(|&v| v as f64).collect();
        let best = (0..set.centroids.rows())
            .map(|c| {
                let dist: f64 = row
                    .iter()
                    .zip(set.centroids.row(c))
                    .map(|(a, b)| (a - b).powi(2))
                    .sum();
                (dist, c)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, c)| c as u32);
        if best == Some(set.labels.row(i)[0]) {
            correct += 1;
        }
    }
    correct as f64 / x.n().max(1) as f64
}
