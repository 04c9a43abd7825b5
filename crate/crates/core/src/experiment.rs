//! Multi-seed evaluation protocol and the ablation variants.
//!
//! Across seeds only the random part of a variant is redrawn: for the full
//! pipeline that is the rotation R, with the PCA basis and mean fitted once.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::eval::{self, ApDenominator, LabelSet, MetricReport, Ranking};
use crate::hasher::{self, binarize, HashModel, PreprocessFlags};

/// Retrieval mode for an evaluation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Query probabilities against database codes.
    Asym,
    /// Binarized queries by Hamming distance.
    Sym,
    /// Cosine similarity of PCA coordinates.
    Float,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Asym => "asym",
            Mode::Sym => "sym",
            Mode::Float => "float",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asym" => Ok(Mode::Asym),
            "sym" => Ok(Mode::Sym),
            "float" => Ok(Mode::Float),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

/// Pipeline variants compared in the ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// PCA fitted on the training set, random rotation per seed.
    Full,
    /// PCA without rotation (`R = I`); deterministic.
    NoRotation,
    /// Random k×d row-orthonormal projection per seed, no PCA.
    NoPca,
    /// PCA fitted on a separate corpus, random rotation per seed.
    GlobalPca,
    /// PCA fitted on a separate corpus without rotation; deterministic.
    GlobalPcaNoRotation,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoRotation => "no-rotation",
            Variant::NoPca => "no-pca",
            Variant::GlobalPca => "global-pca",
            Variant::GlobalPcaNoRotation => "global-pca-no-rotation",
        }
    }

    pub fn is_deterministic(self) -> bool {
        matches!(self, Variant::NoRotation | Variant::GlobalPcaNoRotation)
    }

    pub fn needs_global_corpus(self) -> bool {
        matches!(self, Variant::GlobalPca | Variant::GlobalPcaNoRotation)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "no-rotation" => Ok(Variant::NoRotation),
            "no-pca" => Ok(Variant::NoPca),
            "global-pca" => Ok(Variant::GlobalPca),
            "global-pca-no-rotation" => Ok(Variant::GlobalPcaNoRotation),
            other => Err(Error::InvalidArgument(format!("unknown variant {other:?}"))),
        }
    }
}

/// Database and query sets with their labels and the mAP cutoff.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub database: EmbeddingMatrix,
    pub database_labels: LabelSet,
    pub queries: EmbeddingMatrix,
    pub query_labels: LabelSet,
    pub k_eval: usize,
    pub convention: ApDenominator,
}

impl Benchmark {
    pub fn new(
        database: EmbeddingMatrix,
        database_labels: LabelSet,
        queries: EmbeddingMatrix,
        query_labels: LabelSet,
        k_eval: usize,
    ) -> Result<Self> {
        if database.d() != queries.d() {
            return Err(Error::DimensionMismatch {
                expected: database.d(),
                found: queries.d(),
            });
        }
        if database_labels.len() != database.n() {
            return Err(Error::LabelMismatch {
                what: "database labels",
                expected: database.n(),
                found: database_labels.len(),
            });
        }
        if query_labels.len() != queries.n() {
            return Err(Error::LabelMismatch {
                what: "query labels",
                expected: queries.n(),
                found: query_labels.len(),
            });
        }
        Ok(Self {
            database,
            database_labels,
            queries,
            query_labels,
            k_eval,
            convention: ApDenominator::default(),
        })
    }

    /// Evaluate one model in the given mode.
    pub fn evaluate(&self, model: &HashModel, mode: Mode) -> Result<MetricReport> {
        match mode {
            Mode::Float => {
                let db = model.reduce_batch(&self.database)?;
                let q = model.reduce_batch(&self.queries)?;
                self.score(Ranking::FloatCosine {
                    db: &db,
                    queries: &q,
                })
            }
            Mode::Asym => {
                let db = model.encode_batch(&self.database)?;
                let q = model.project_batch(&self.queries)?;
                self.score(Ranking::Asymmetric {
                    db: &db,
                    queries: &q,
                })
            }
            Mode::Sym => {
                let db = model.encode_batch(&self.database)?;
                let q: Vec<_> = model
                    .project_batch(&self.queries)?
                    .iter()
                    .map(binarize)
                    .collect();
                self.score(Ranking::Symmetric {
                    db: &db,
                    queries: &q,
                })
            }
        }
    }

    fn score(&self, ranking: Ranking<'_>) -> Result<MetricReport> {
        eval::mean_ap(
            ranking,
            &self.query_labels,
            &self.database_labels,
            self.k_eval,
            self.convention,
        )
    }
}

/// mean ± std of one (variant, bits, mode) cell over seeds.
#[derive(Debug, Clone, Serialize)]
pub struct SeedRun {
    pub variant: Variant,
    pub mode: Mode,
    pub bits: usize,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Everything needed to build variant models.
#[derive(Debug, Clone, Copy)]
pub struct Corpora<'a> {
    pub train: &'a EmbeddingMatrix,
    /// Corpus for the global-PCA variants.
    pub global: Option<&'a EmbeddingMatrix>,
    pub flags: PreprocessFlags,
}

/// Evaluate `variant` at `bits` for every seed.
///
/// Float mode has no randomness and is evaluated once. Deterministic
/// variants are likewise evaluated once and repeated for every seed.
pub fn run_seeds(
    bench: &Benchmark,
    corpora: Corpora<'_>,
    variant: Variant,
    bits: usize,
    seeds: &[u64],
    mode: Mode,
) -> Result<SeedRun> {
    let first = *seeds
        .first()
        .ok_or_else(|| Error::InvalidArgument("at least one seed required".into()))?;
    let pca_source = if variant.needs_global_corpus() {
        corpora.global.ok_or_else(|| {
            Error::InvalidArgument(format!("variant {variant} needs a global training corpus"))
        })?
    } else {
        corpora.train
    };
    let per_seed = match variant {
        Variant::NoPca => {
            if mode == Mode::Float {
                let m = hasher::fit_random_projection(corpora.train, bits, first, corpora.flags)?;
                vec![bench.evaluate(&m, mode)?.map; seeds.len()]
            } else {
                seeds
                    .iter()
                    .map(|&s| {
                        let m =
                            hasher::fit_random_projection(corpora.train, bits, s, corpora.flags)?;
                        Ok(bench.evaluate(&m, mode)?.map)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        }
        _ => {
            let base = hasher::fit(pca_source, bits, first, corpora.flags)?;
            if variant.is_deterministic() || mode == Mode::Float {
                let m = base.without_rotation();
                vec![bench.evaluate(&m, mode)?.map; seeds.len()]
            } else {
                seeds
                    .iter()
                    .map(|&s| Ok(bench.evaluate(&base.with_rotation_seed(s)?, mode)?.map))
                    .collect::<Result<Vec<_>>>()?
            }
        }
    };
    let (mean, std) = eval::mean_std(&per_seed);
    Ok(SeedRun {
        variant,
        mode,
        bits,
        seeds: seeds.to_vec(),
        per_seed,
        mean,
        std,
    })
}

/// One row per (variant, bits), in the order given.
pub fn ablation_table(
    bench: &Benchmark,
    corpora: Corpora<'_>,
    variants: &[Variant],
    bits: &[usize],
    seeds: &[u64],
    mode: Mode,
) -> Result<Vec<SeedRun>> {
    let mut rows = Vec::with_capacity(variants.len() * bits.len());
    for &variant in variants {
        for &k in bits {
            rows.push(run_seeds(bench, corpora, variant, k, seeds, mode)?);
        }
    }
    Ok(rows)
}
