//! Retrieval metrics: average precision, mAP@k and multi-seed aggregation.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hasher::BitProbabilities;
use crate::index::{self, BinaryCode, CodeDatabase, RetrievalResult};
use crate::linalg::{self, DenseMatrix};

/// Per-item sets of class ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    classes: u32,
    rows: Vec<Vec<u32>>,
}

impl LabelSet {
    /// Rows are sorted and deduplicated. Every row needs at least one label and
    /// every id must be below `classes`.
    pub fn new(classes: u32, rows: Vec<Vec<u32>>) -> Result<Self> {
        let mut rows = rows;
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            if row.is_empty() {
                return Err(Error::InvalidArgument(format!("item {i} has no label")));
            }
            if let Some(&bad) = row.iter().find(|&&c| c >= classes) {
                return Err(Error::InvalidArgument(format!(
                    "item {i}: class id {bad} out of range (c = {classes})"
                )));
            }
        }
        Ok(Self { classes, rows })
    }

    pub fn single(classes: u32, ids: &[u32]) -> Result<Self> {
        Self::new(classes, ids.iter().map(|&c| vec![c]).collect())
    }

    pub fn classes(&self) -> u32 {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    /// True when every row holds exactly one label.
    pub fn is_single_label(&self) -> bool {
        self.rows.iter().all(|r| r.len() == 1)
    }

    pub fn select(&self, ids: &[usize]) -> Self {
        Self {
            classes: self.classes,
            rows: ids.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

/// Two items are relevant to each other when their label sets intersect.
pub fn relevant(q: &[u32], d: &[u32]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < q.len() && j < d.len() {
        match q[i].cmp(&d[j]) {
            std::cmp::Ordering::Equal => return true,
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
        }
    }
    false
}

/// Normalizer for the sum of precisions at relevant ranks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApDenominator {
    /// Relevant items retrieved within the cutoff.
    #[default]
    Retrieved,
    /// `min(R, cutoff)` with R the number of relevant database items.
    MinRelevantCutoff,
}

/// AP over a ranked relevance list, normalized by relevant items retrieved.
pub fn average_precision(rel: &[bool]) -> f64 {
    average_precision_with(rel, ApDenominator::Retrieved, 0)
}

/// AP with an explicit denominator convention. `total_relevant` is only read
/// for [`ApDenominator::MinRelevantCutoff`]. Returns 0 when nothing relevant
/// is retrieved.
pub fn average_precision_with(
    rel: &[bool],
    convention: ApDenominator,
    total_relevant: usize,
) -> f64 {
    // Double-double accumulation so the result is the correctly rounded ratio.
    let mut hits = 0usize;
    let mut sum = (0.0, 0.0);
    for (i, &r) in rel.iter().enumerate() {
        if r {
            hits += 1;
            sum = dd_add(sum, dd_div(hits as f64, (i + 1) as f64));
        }
    }
    if hits == 0 {
        return 0.0;
    }
    let denom = match convention {
        ApDenominator::Retrieved => hits,
        ApDenominator::MinRelevantCutoff => total_relevant.min(rel.len()).max(hits),
    } as f64;
    let q = sum.0 / denom;
    let r = (-q).mul_add(denom, sum.0) + sum.1;
    q + r / denom
}

fn dd_div(a: f64, b: f64) -> (f64, f64) {
    let q = a / b;
    (q, (-q).mul_add(b, a) / b)
}

fn dd_add(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let s = a.0 + b.0;
    let v = s - a.0;
    let e = (a.0 - (s - v)) + (b.0 - v) + a.1 + b.1;
    let hi = s + e;
    (hi, e - (hi - s))
}

/// Fraction of relevant items among the first `k` (debugging aid).
pub fn precision_at_k(rel: &[bool], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    rel.iter().take(k).filter(|&&r| r).count() as f64 / k as f64
}

/// How queries are ranked against the database.
#[derive(Debug, Clone, Copy)]
pub enum Ranking<'a> {
    /// Real-valued query probabilities against binary codes.
    Asymmetric {
        db: &'a CodeDatabase,
        queries: &'a [BitProbabilities],
    },
    /// Binary query codes by Hamming distance.
    Symmetric {
        db: &'a CodeDatabase,
        queries: &'a [BinaryCode],
    },
    /// Cosine similarity of real vectors (rows of both matrices).
    FloatCosine {
        db: &'a DenseMatrix,
        queries: &'a DenseMatrix,
    },
}

impl Ranking<'_> {
    pub fn mode(&self) -> &'static str {
        match self {
            Ranking::Asymmetric { .. } => "asym",
            Ranking::Symmetric { .. } => "sym",
            Ranking::FloatCosine { .. } => "float",
        }
    }

    pub fn db_len(&self) -> usize {
        match self {
            Ranking::Asymmetric { db, .. } | Ranking::Symmetric { db, .. } => db.len(),
            Ranking::FloatCosine { db, .. } => db.rows(),
        }
    }

    pub fn query_len(&self) -> usize {
        match self {
            Ranking::Asymmetric { queries, .. } => queries.len(),
            Ranking::Symmetric { queries, .. } => queries.len(),
            Ranking::FloatCosine { queries, .. } => queries.rows(),
        }
    }

    /// Top-`topk` database ids for query `q`.
    pub fn rank(&self, q: usize, topk: usize) -> Result<RetrievalResult> {
        match *self {
            Ranking::Asymmetric { db, queries } => index::search_asymmetric(db, &queries[q], topk),
            Ranking::Symmetric { db, queries } => index::search_symmetric(db, &queries[q], topk),
            Ranking::FloatCosine { db, queries } => {
                if db.cols() != queries.cols() {
                    return Err(Error::DimensionMismatch {
                        expected: db.cols(),
                        found: queries.cols(),
                    });
                }
                let qv = queries.row(q);
                let qn = linalg::dot(qv, qv).sqrt();
                Ok(index::top_k_by(db.rows(), topk, |i| {
                    let dv = db.row(i);
                    let dn = linalg::dot(dv, dv).sqrt();
                    if qn == 0.0 || dn == 0.0 {
                        0.0
                    } else {
                        linalg::dot(qv, dv) / (qn * dn)
                    }
                }))
            }
        }
    }
}

/// Outcome of one evaluation, optionally aggregated over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub map: f64,
    pub per_query_ap: Vec<f64>,
    pub k_eval: usize,
    pub seeds: Vec<u64>,
    pub mean: f64,
    pub std: f64,
}

/// mAP@`k_eval` over all queries. A cutoff above the database size is clamped.
pub fn mean_ap(
    ranking: Ranking<'_>,
    q_labels: &LabelSet,
    db_labels: &LabelSet,
    k_eval: usize,
    convention: ApDenominator,
) -> Result<MetricReport> {
    if k_eval == 0 {
        return Err(Error::InvalidArgument("k_eval must be at least 1".into()));
    }
    let n = ranking.db_len();
    if db_labels.len() != n {
        return Err(Error::LabelMismatch {
            what: "database labels",
            expected: n,
            found: db_labels.len(),
        });
    }
    if q_labels.len() != ranking.query_len() {
        return Err(Error::LabelMismatch {
            what: "query labels",
            expected: ranking.query_len(),
            found: q_labels.len(),
        });
    }
    let k_eval = k_eval.min(n);
    let per_query_ap: Vec<f64> = (0..q_labels.len())
        .into_par_iter()
        .map(|q| {
            if k_eval == 0 {
                return Ok(0.0);
            }
            let ranked = ranking.rank(q, k_eval)?;
            let ql = q_labels.row(q);
            let rel: Vec<bool> = ranked
                .ids
                .iter()
                .map(|&i| relevant(ql, db_labels.row(i)))
                .collect();
            let total = match convention {
                ApDenominator::Retrieved => 0,
                ApDenominator::MinRelevantCutoff => {
                    db_labels.rows().iter().filter(|d| relevant(ql, d)).count()
                }
            };
            Ok(average_precision_with(&rel, convention, total))
        })
        .collect::<Result<_>>()?;
    let map = if per_query_ap.is_empty() {
        0.0
    } else {
        per_query_ap.iter().sum::<f64>() / per_query_ap.len() as f64
    };
    Ok(MetricReport {
        map,
        per_query_ap,
        k_eval,
        seeds: Vec::new(),
        mean: map,
        std: 0.0,
    })
}

/// Arithmetic mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    // Shifting by the first value keeps constant sequences exact.
    let x0 = values[0];
    let mean = x0 + values.iter().map(|v| v - x0).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Run `run` once per seed and aggregate the returned mAP values.
pub fn multi_seed<F>(seeds: &[u64], mut run: F) -> Result<(f64, f64)>
where
    F: FnMut(u64) -> Result<f64>,
{
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed required".into()));
    }
    let values = seeds.iter().map(|&s| run(s)).collect::<Result<Vec<_>>>()?;
    Ok(mean_std(&values))
}
