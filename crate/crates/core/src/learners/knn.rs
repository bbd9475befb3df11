//! Lazy k-nearest-neighbour margin scorer.
//!
//! The score of a probe `x` is the mean cosine similarity to its `k`
//! nearest stored positives minus the mean similarity to its `k` nearest
//! negatives (fewer when a class holds fewer than `k` samples). Training
//! stores unit-normalized copies of the samples; identical entries are kept
//! once, so duplicating a store leaves every score unchanged.
//!
//! Similarities are computed in blocks with `sgemm`. Each similarity is
//! a dot product accumulated in a fixed order, independent of where the
//! row sits in the store, so a cached neighbour list merged with new rows
//! gives the same score as retraining on the union.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use crate::features::FeatureVector;
use crate::learners::{Label, Sample, SampleStore};
use crate::{par, Error, Result};

pub const DEFAULT_K: usize = 5;

const QUERY_BLOCK: usize = 32;
const ROW_BLOCK: usize = 1024;

/// Unit-normalized copy of `x` in single precision. Zero vectors stay zero.
pub fn normalize(x: &[f32]) -> Vec<f32> {
    let norm = x
        .iter()
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 {
        return x.to_vec();
    }
    x.iter().map(|&v| (v as f64 / norm) as f32).collect()
}

fn row_hash(label: Label, row: &[f32]) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    label.hash(&mut h);
    for v in row {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Unique normalized rows of one class.
#[derive(Debug, Clone, Default)]
struct RowSet {
    data: Vec<f32>,
    len: usize,
    by_hash: HashMap<u64, Vec<u32>>,
}

impl RowSet {
    fn row(&self, i: usize, dim: usize) -> &[f32] {
        &self.data[i * dim..(i + 1) * dim]
    }

    fn find(&self, hash: u64, row: &[f32], dim: usize) -> Option<usize> {
        self.by_hash
            .get(&hash)?
            .iter()
            .map(|&i| i as usize)
            .find(|&i| self.row(i, dim) == row)
    }

    /// Inserts a normalized row unless an identical one exists.
    fn insert(&mut self, hash: u64, row: &[f32], dim: usize) -> bool {
        if self.find(hash, row, dim).is_some() {
            return false;
        }
        self.by_hash.entry(hash).or_default().push(self.len as u32);
        self.data.extend_from_slice(row);
        self.len += 1;
        true
    }
}

/// A batch of probes, normalized once and reusable across models.
#[derive(Debug, Clone)]
pub struct QueryBatch {
    dim: usize,
    rows: usize,
    data: Vec<f32>,
}

impl QueryBatch {
    pub fn new(xs: &[FeatureVector]) -> Result<Self> {
        let dim = xs.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(dim * xs.len());
        for x in xs {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: x.len(),
                });
            }
            data.extend(normalize(x.as_slice()));
        }
        Ok(Self {
            dim,
            rows: xs.len(),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// The rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            dim: self.dim,
            rows: idx.len(),
            data,
        }
    }

    /// Gram matrix of the batch with itself, row-major.
    pub fn self_similarity(&self) -> Vec<f32> {
        let mut out = vec![0f32; self.rows * self.rows];
        gemm_nt(
            &self.data, self.rows, &self.data, self.rows, self.dim, &mut out,
        );
        out
    }
}

/// `out[i * nb + j] = a_i . b_j` for row-major `a` (na x dim) and `b`.
fn gemm_nt(a: &[f32], na: usize, b: &[f32], nb: usize, dim: usize, out: &mut [f32]) {
    debug_assert!(a.len() >= na * dim && b.len() >= nb * dim && out.len() >= na * nb);
    if na == 0 || nb == 0 {
        return;
    }
    if dim == 0 {
        out[..na * nb].fill(0.0);
        return;
    }
    // SAFETY: the asserted lengths cover every element addressed by the
    // given shapes and strides.
    unsafe {
        matrixmultiply::sgemm(
            na,
            dim,
            nb,
            1.0,
            a.as_ptr(),
            dim as isize,
            1,
            b.as_ptr(),
            1,
            dim as isize,
            0.0,
            out.as_mut_ptr(),
            nb as isize,
            1,
        );
    }
}

/// The `k` largest similarities to each class for a batch of probes,
/// sorted descending and padded with `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbors {
    k: usize,
    pos: Vec<f32>,
    neg: Vec<f32>,
}

impl Neighbors {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.pos.len() / self.k.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    pub fn top(&self, i: usize, label: Label) -> &[f32] {
        let v = match label {
            Label::Positive => &self.pos,
            Label::Negative => &self.neg,
        };
        &v[i * self.k..(i + 1) * self.k]
    }

    /// The lists of probes `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let k = self.k;
        let pick = |v: &[f32]| {
            idx.iter()
                .flat_map(|&i| v[i * k..(i + 1) * k].iter().copied())
                .collect()
        };
        Self {
            k,
            pos: pick(&self.pos),
            neg: pick(&self.neg),
        }
    }

    /// Margin score of probe `i`.
    pub fn score(&self, i: usize) -> f64 {
        mean_top(self.top(i, Label::Positive)) - mean_top(self.top(i, Label::Negative))
    }
}

/// Inserts `v` into a descending top list, dropping the smallest.
#[inline]
pub fn push_top(top: &mut [f32], v: f32) {
    let k = top.len();
    if k == 0 || v <= top[k - 1] {
        return;
    }
    let mut i = k - 1;
    while i > 0 && top[i - 1] < v {
        top[i] = top[i - 1];
        i -= 1;
    }
    top[i] = v;
}

/// Mean of the finite entries of a descending top list.
pub fn mean_top(top: &[f32]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for &v in top {
        if v == f32::NEG_INFINITY {
            break;
        }
        sum += v as f64;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Trained k-NN margin scorer.
#[derive(Debug, Clone)]
pub struct KnnModel {
    k: usize,
    dim: usize,
    pos: RowSet,
    neg: RowSet,
}

impl KnnModel {
    /// An empty index; scoring fails until both classes are present.
    pub fn empty(k: usize, dim: usize) -> Self {
        Self {
            k: k.max(1),
            dim,
            pos: RowSet::default(),
            neg: RowSet::default(),
        }
    }

    /// Indexes `store`. Requires at least one sample of each class.
    pub fn train(store: &SampleStore, k: usize) -> Result<Self> {
        if !store.is_mixed() {
            return Err(Error::InsufficientDiversity);
        }
        let dim = store.entries()[0].features.len();
        let mut model = Self::empty(k, dim);
        model.try_extend(store.entries())?;
        Ok(model)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of unique indexed rows of `label`.
    pub fn count(&self, label: Label) -> usize {
        self.rows(label).len
    }

    pub fn is_trained(&self) -> bool {
        self.pos.len > 0 && self.neg.len > 0
    }

    fn rows(&self, label: Label) -> &RowSet {
        match label {
            Label::Positive => &self.pos,
            Label::Negative => &self.neg,
        }
    }

    fn rows_mut(&mut self, label: Label) -> &mut RowSet {
        match label {
            Label::Positive => &mut self.pos,
            Label::Negative => &mut self.neg,
        }
    }

    fn try_extend(&mut self, samples: &[Sample]) -> Result<()> {
        for s in samples {
            if s.features.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: s.features.len(),
                });
            }
            let row = normalize(s.features.as_slice());
            let h = row_hash(s.label, &row);
            let dim = self.dim;
            self.rows_mut(s.label).insert(h, &row, dim);
        }
        Ok(())
    }

    /// Adds samples to the index. Equivalent to retraining on the store
    /// with `samples` appended.
    pub fn extend(&mut self, samples: &[Sample]) {
        self.try_extend(samples)
            .expect("samples share the model dimension");
    }

    /// Whether an identical (normalized) row of `label` is indexed.
    pub fn contains_normalized(&self, row: &[f32], label: Label) -> bool {
        self.rows(label)
            .find(row_hash(label, row), row, self.dim)
            .is_some()
    }

    pub fn score(&self, x: &FeatureVector) -> Result<f64> {
        Ok(self.score_batch(std::slice::from_ref(x))?[0])
    }

    pub fn score_batch(&self, xs: &[FeatureVector]) -> Result<Vec<f64>> {
        let q = QueryBatch::new(xs)?;
        let nb = self.neighbors(&q)?;
        Ok((0..q.len()).map(|i| nb.score(i)).collect())
    }

    /// Top-k similarities of every probe against both classes.
    pub fn neighbors(&self, q: &QueryBatch) -> Result<Neighbors> {
        if !self.is_trained() {
            return Err(Error::UntrainedModel);
        }
        if !q.is_empty() && q.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: q.dim(),
            });
        }
        let k = self.k;
        let blocks = q.len().div_ceil(QUERY_BLOCK);
        let parts = par::map_range(blocks, |b| {
            let start = b * QUERY_BLOCK;
            let end = (start + QUERY_BLOCK).min(q.len());
            let block = &q.data[start * q.dim..end * q.dim];
            let pos = self.block_top(block, end - start, &self.pos);
            let neg = self.block_top(block, end - start, &self.neg);
            (pos, neg)
        });
        let mut pos = Vec::with_capacity(q.len() * k);
        let mut neg = Vec::with_capacity(q.len() * k);
        for (p, n) in parts {
            pos.extend(p);
            neg.extend(n);
        }
        Ok(Neighbors { k, pos, neg })
    }

    fn block_top(&self, queries: &[f32], nq: usize, rows: &RowSet) -> Vec<f32> {
        let k = self.k;
        let mut top = vec![f32::NEG_INFINITY; nq * k];
        let mut sims = vec![0f32; nq * ROW_BLOCK.min(rows.len.max(1))];
        let mut r0 = 0;
        while r0 < rows.len {
            let nr = ROW_BLOCK.min(rows.len - r0);
            let block = &rows.data[r0 * self.dim..(r0 + nr) * self.dim];
            gemm_nt(queries, nq, block, nr, self.dim, &mut sims);
            for i in 0..nq {
                let t = &mut top[i * k..(i + 1) * k];
                for &s in &sims[i * nr..(i + 1) * nr] {
                    push_top(t, s);
                }
            }
            r0 += nr;
        }
        top
    }
}
