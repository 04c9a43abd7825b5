//! Packed binary codes and exhaustive top-k search.
//!
//! Bit `j` of a code lives in bit `j % 64` of word `j / 64` (LSB first);
//! padding bits past `k` are always zero.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hasher::BitProbabilities;

/// Rows per shard when a scan is split across threads.
const SHARD_ROWS: usize = 8192;

#[inline]
pub fn words_for(k: usize) -> usize {
    k.div_ceil(64)
}

#[inline]
fn padding_mask(k: usize) -> u64 {
    match k % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// A single k-bit code.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryCode {
    k: usize,
    words: Vec<u64>,
}

impl BinaryCode {
    pub fn zeros(k: usize) -> Self {
        Self {
            k,
            words: vec![0; words_for(k)],
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut code = Self::zeros(bits.len());
        for (j, &b) in bits.iter().enumerate() {
            code.set(j, b);
        }
        code
    }

    /// Build from raw words; fails if any padding bit is set.
    pub fn from_words(k: usize, words: Vec<u64>) -> Result<Self> {
        if words.len() != words_for(k) {
            return Err(Error::DimensionMismatch {
                expected: words_for(k),
                found: words.len(),
            });
        }
        if let Some(&last) = words.last() {
            if last & !padding_mask(k) != 0 {
                return Err(Error::InvalidArgument(
                    "padding bits beyond k must be zero".into(),
                ));
            }
        }
        Ok(Self { k, words })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    #[inline]
    pub fn bit(&self, j: usize) -> bool {
        assert!(j < self.k, "bit {j} out of range for k = {}", self.k);
        self.words[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn set(&mut self, j: usize, value: bool) {
        assert!(j < self.k, "bit {j} out of range for k = {}", self.k);
        let mask = 1u64 << (j % 64);
        if value {
            self.words[j / 64] |= mask;
        } else {
            self.words[j / 64] &= !mask;
        }
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn to_bits(&self) -> Vec<bool> {
        (0..self.k).map(|j| self.bit(j)).collect()
    }

    /// The code as degenerate 0.0/1.0 probabilities.
    pub fn to_probabilities(&self) -> BitProbabilities {
        BitProbabilities::new(
            (0..self.k)
                .map(|j| if self.bit(j) { 1.0 } else { 0.0 })
                .collect(),
        )
        .expect("0/1 values are valid probabilities")
    }
}

/// Immutable store of n packed k-bit codes; ids are row positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeDatabase {
    k: usize,
    n: usize,
    words: Vec<u64>,
}

impl CodeDatabase {
    pub fn empty(k: usize) -> Self {
        Self {
            k,
            n: 0,
            words: Vec::new(),
        }
    }

    pub fn from_codes(k: usize, codes: &[BinaryCode]) -> Result<Self> {
        let mut words = Vec::with_capacity(codes.len() * words_for(k));
        for c in codes {
            if c.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: c.len(),
                });
            }
            words.extend_from_slice(c.words());
        }
        Ok(Self {
            k,
            n: codes.len(),
            words,
        })
    }

    /// Build from a flat word buffer, validating length and padding. Returns
    /// the offending item index on a padding violation.
    pub fn from_words(k: usize, n: usize, words: Vec<u64>) -> std::result::Result<Self, usize> {
        let w = words_for(k);
        assert_eq!(words.len(), n * w, "word buffer length");
        let mask = !padding_mask(k);
        if w > 0 {
            if let Some(item) = (0..n).find(|i| words[i * w + w - 1] & mask != 0) {
                return Err(item);
            }
        }
        Ok(Self { k, n, words })
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn words_per_code(&self) -> usize {
        words_for(self.k)
    }

    #[inline]
    pub fn code_words(&self, i: usize) -> &[u64] {
        let w = words_for(self.k);
        &self.words[i * w..(i + 1) * w]
    }

    pub fn code(&self, i: usize) -> BinaryCode {
        BinaryCode {
            k: self.k,
            words: self.code_words(i).to_vec(),
        }
    }

    pub fn as_words(&self) -> &[u64] {
        &self.words
    }
}

/// Ranked ids with their similarity scores (higher is better).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RetrievalResult {
    pub ids: Vec<usize>,
    pub scores: Vec<f64>,
}

impl RetrievalResult {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[inline]
fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Number of differing bits.
pub fn hamming(a: &BinaryCode, b: &BinaryCode) -> Result<u32> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(hamming_words(a.words(), b.words()))
}

/// A query prepared for asymmetric scoring against packed codes.
///
/// Uses `-Σ|b_j - p_j| = -(Σ p_j + Σ_{b_j = 1} (1 - 2 p_j))`, with the second
/// sum read from one 256-entry table per code byte.
#[derive(Debug, Clone)]
pub struct AsymmetricQuery {
    k: usize,
    base: f64,
    tables: Vec<[f64; 256]>,
}

impl AsymmetricQuery {
    pub fn new(p: &BitProbabilities) -> Self {
        let k = p.len();
        let weights: Vec<f64> = p.values().iter().map(|&v| 1.0 - 2.0 * v).collect();
        let base: f64 = p.values().iter().sum();
        let tables = weights
            .chunks(8)
            .map(|chunk| {
                let mut table = [0.0f64; 256];
                for (byte, slot) in table.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (bit, w) in chunk.iter().enumerate() {
                        if byte >> bit & 1 == 1 {
                            acc += w;
                        }
                    }
                    *slot = acc;
                }
                table
            })
            .collect();
        Self { k, base, tables }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn score_words(&self, words: &[u64]) -> f64 {
        let mut acc = self.base;
        let mut tables = self.tables.iter();
        'outer: for &word in words {
            let mut w = word;
            for _ in 0..8 {
                let Some(table) = tables.next() else {
                    break 'outer;
                };
                acc += table[(w & 0xff) as usize];
                w >>= 8;
            }
        }
        // Adding +0.0 folds a negative zero into positive zero.
        -acc + 0.0
    }
}

/// Asymmetric score `-Σ_j |b_j - p_j|`, in [-k, 0].
pub fn asym_score(p: &BitProbabilities, b: &BinaryCode) -> Result<f64> {
    if p.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            found: p.len(),
        });
    }
    Ok(AsymmetricQuery::new(p).score_words(b.words()))
}

/// Heap entry ordered so that the heap top is the worst retained candidate.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: f64,
    id: usize,
}

impl Candidate {
    /// Ranking order: higher score first, then lower id.
    #[inline]
    fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .partial_cmp(&self.score)
            .unwrap_or(Ordering::Equal)
            .then(self.id.cmp(&other.id))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.rank_cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank_cmp(other)
    }
}

fn scan_range<F>(range: std::ops::Range<usize>, topk: usize, score: &F) -> Vec<Candidate>
where
    F: Fn(usize) -> f64,
{
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(topk + 1);
    for id in range {
        let cand = Candidate {
            score: score(id),
            id,
        };
        if heap.len() < topk {
            heap.push(cand);
        } else if let Some(worst) = heap.peek() {
            if cand < *worst {
                heap.pop();
                heap.push(cand);
            }
        }
    }
    heap.into_vec()
}

/// Exact top-k over ids `0..n` by `score`, ties broken by ascending id.
///
/// Large scans are sharded across the rayon pool; since the ranking order is
/// total, the merged result equals the sequential scan.
pub fn top_k_by<F>(n: usize, topk: usize, score: F) -> RetrievalResult
where
    F: Fn(usize) -> f64 + Sync,
{
    let topk = topk.min(n);
    if topk == 0 {
        return RetrievalResult::default();
    }
    let mut all = if n > SHARD_ROWS {
        let shards = n.div_ceil(SHARD_ROWS);
        (0..shards)
            .into_par_iter()
            .map(|s| scan_range(s * SHARD_ROWS..((s + 1) * SHARD_ROWS).min(n), topk, &score))
            .flatten_iter()
            .collect::<Vec<_>>()
    } else {
        scan_range(0..n, topk, &score)
    };
    all.sort_unstable();
    all.truncate(topk);
    RetrievalResult {
        ids: all.iter().map(|c| c.id).collect(),
        scores: all.iter().map(|c| c.score).collect(),
    }
}

fn check_topk(topk: usize) -> Result<()> {
    if topk == 0 {
        return Err(Error::InvalidArgument("topk must be at least 1".into()));
    }
    Ok(())
}

/// Top-k database items by asymmetric score against real-valued `p_q`.
pub fn search_asymmetric(
    db: &CodeDatabase,
    p_q: &BitProbabilities,
    topk: usize,
) -> Result<RetrievalResult> {
    check_topk(topk)?;
    if p_q.len() != db.k() {
        return Err(Error::DimensionMismatch {
            expected: db.k(),
            found: p_q.len(),
        });
    }
    let query = AsymmetricQuery::new(p_q);
    Ok(top_k_by(db.len(), topk, |i| {
        query.score_words(db.code_words(i))
    }))
}

/// Top-k database items by `-hamming(q, b)`.
pub fn search_symmetric(db: &CodeDatabase, q: &BinaryCode, topk: usize) -> Result<RetrievalResult> {
    check_topk(topk)?;
    if q.len() != db.k() {
        return Err(Error::DimensionMismatch {
            expected: db.k(),
            found: q.len(),
        });
    }
    Ok(top_k_by(db.len(), topk, |i| {
        -(hamming_words(q.words(), db.code_words(i)) as f64) + 0.0
    }))
}
