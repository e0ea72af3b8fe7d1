//! Distance and neighbour kernels.
//!
//! Squared-Euclidean matrices feed a k-nearest-neighbour table, which is
//! expanded into k-reciprocal sets. Distances inside each set are turned into
//! `exp(-d)` weights and two samples are then compared by the weighted
//! Jaccard distance of their weight profiles.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::EmbeddingSet;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricTag {
    SqEuclidean,
    Jaccard,
}

/// Dense row-major distance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    tag: MetricTag,
}

impl DistanceMatrix {
    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>, tag: MetricTag) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values do not fill a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            values,
            tag,
        })
    }

    /// Builds a square matrix from a closure evaluated on every cell.
    pub fn from_fn(n: usize, tag: MetricTag, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(f(i, j));
            }
        }
        Self {
            rows: n,
            cols: n,
            values,
            tag,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Side length of a square matrix.
    pub fn n(&self) -> usize {
        debug_assert!(self.is_square());
        self.rows
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn tag(&self) -> MetricTag {
        self.tag
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Square submatrix on `indices` (in the given order).
    pub fn select(&self, indices: &[usize]) -> Self {
        let m = indices.len();
        let mut values = Vec::with_capacity(m * m);
        for &i in indices {
            let row = self.row(i);
            values.extend(indices.iter().map(|&j| row[j]));
        }
        Self {
            rows: m,
            cols: m,
            values,
            tag: self.tag,
        }
    }
}

#[inline]
pub fn sq_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let t = x - y;
            t * t
        })
        .sum()
}

/// `values[i][j] = ||a_i - b_j||^2`, computed from coordinate differences so
/// that `pairwise_sq_euclidean(a, a)` is exactly symmetric with zero diagonal.
pub fn pairwise_sq_euclidean(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<DistanceMatrix> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let cols = b.len();
    let mut values = vec![0.0; a.len() * cols];
    values
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(i, out)| {
            let ai = a.row(i);
            for (j, cell) in out.iter_mut().enumerate() {
                *cell = sq_euclidean(ai, b.row(j));
            }
        });
    DistanceMatrix::from_values(a.len(), cols, values, MetricTag::SqEuclidean)
}

/// Per-sample neighbour lists of length `k`; entry 0 is the sample itself and
/// the rest follow ascending distance with ties broken by ascending index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborLists {
    k: usize,
    lists: Vec<Vec<usize>>,
}

impl NeighborLists {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn list(&self, i: usize) -> &[usize] {
        &self.lists[i]
    }

    /// The first `m` neighbours of `i`, self included.
    pub fn top(&self, i: usize, m: usize) -> &[usize] {
        &self.lists[i][..m.min(self.k)]
    }

    pub fn lists(&self) -> &[Vec<usize>] {
        &self.lists
    }
}

/// Indices of row `i` other than `i`, ordered by (distance, index).
pub(crate) fn ranked_others(dist: &DistanceMatrix, i: usize, take: usize) -> Vec<usize> {
    let row = dist.row(i);
    let mut others: Vec<usize> = (0..row.len()).filter(|&j| j != i).collect();
    let cmp = |&a: &usize, &b: &usize| row[a].total_cmp(&row[b]).then(a.cmp(&b));
    let take = take.min(others.len());
    if take == 0 {
        return Vec::new();
    }
    if take < others.len() {
        others.select_nth_unstable_by(take - 1, cmp);
        others.truncate(take);
    }
    others.sort_unstable_by(cmp);
    others
}

pub fn knn(dist: &DistanceMatrix, k: usize) -> Result<NeighborLists> {
    if !dist.is_square() {
        return Err(Error::Shape("knn requires a square distance matrix".into()));
    }
    let n = dist.n();
    if k > n || k == 0 {
        return Err(Error::TooManyNeighbors { k, n });
    }
    let lists = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut list = Vec::with_capacity(k);
            list.push(i);
            list.extend(ranked_others(dist, i, k - 1));
            list
        })
        .collect();
    Ok(NeighborLists { k, lists })
}

/// Sorted index set per sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpandedSets {
    sets: Vec<Vec<usize>>,
}

impl ExpandedSets {
    /// Sets are sorted and deduplicated on construction.
    pub fn from_sets(sets: Vec<Vec<usize>>) -> Self {
        let sets = sets
            .into_iter()
            .map(|mut s| {
                s.sort_unstable();
                s.dedup();
                s
            })
            .collect();
        Self { sets }
    }

    pub fn set(&self, i: usize) -> &[usize] {
        &self.sets[i]
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.sets[i].binary_search(&j).is_ok()
    }
}

/// Grows each `K_k(i)` by every `K_{k/2}(ind)`, `ind ∈ K_k(i)`, that shares at
/// least two thirds of its members with `K_k(i)`.
pub fn k_reciprocal_expand(nbrs: &NeighborLists) -> ExpandedSets {
    let k = nbrs.k();
    let half = k / 2;
    let sets = (0..nbrs.len())
        .into_par_iter()
        .map(|i| {
            let mut base = nbrs.list(i).to_vec();
            base.sort_unstable();
            let mut set = base.clone();
            for &ind in nbrs.list(i) {
                let candidate = nbrs.top(ind, half);
                let shared = candidate
                    .iter()
                    .filter(|c| base.binary_search(c).is_ok())
                    .count();
                if 3 * shared >= 2 * candidate.len() {
                    set.extend_from_slice(candidate);
                }
            }
            set.sort_unstable();
            set.dedup();
            set
        })
        .collect();
    ExpandedSets { sets }
}

/// Sparse rows of `exp(-d_ij)` weights, sorted by column.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseWeights {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseWeights {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let rows = rows
            .into_iter()
            .map(|mut r| {
                r.sort_by_key(|&(j, _)| j);
                r
            })
            .collect();
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Weight at `(i, j)`, zero outside the support.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.rows[i];
        row.binary_search_by_key(&j, |&(c, _)| c)
            .map_or(0.0, |pos| row[pos].1)
    }
}

pub fn reweight(dist: &DistanceMatrix, sets: &ExpandedSets) -> SparseWeights {
    let rows = (0..sets.len())
        .map(|i| {
            sets.set(i)
                .iter()
                .map(|&j| (j, (-dist.get(i, j)).exp()))
                .collect()
        })
        .collect();
    SparseWeights { rows }
}

/// Weighted Jaccard distance between weight profiles:
/// `1 - Σ min(w_il, w_jl) / Σ max(w_il, w_jl)`.
///
/// The max-sum is recovered as `Σ w_i + Σ w_j - Σ min`, so only the
/// overlapping support is visited through a column index.
pub fn jaccard_distance(w: &SparseWeights) -> DistanceMatrix {
    let n = w.len();
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for &(l, v) in w.row(i) {
            columns[l].push((i, v));
        }
    }
    let totals: Vec<f64> = (0..n)
        .map(|i| w.row(i).iter().map(|&(_, v)| v).sum())
        .collect();

    let mut values = vec![0.0; n * n];
    values.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
        let mut shared = vec![0.0; n];
        for &(l, wi) in w.row(i) {
            for &(j, wj) in &columns[l] {
                shared[j] += wi.min(wj);
            }
        }
        for (j, cell) in out.iter_mut().enumerate() {
            *cell = if i == j {
                0.0
            } else {
                let union = totals[i] + totals[j] - shared[j];
                if union > 0.0 {
                    (1.0 - shared[j] / union).clamp(0.0, 1.0)
                } else {
                    1.0
                }
            };
        }
    });
    DistanceMatrix {
        rows: n,
        cols: n,
        values,
        tag: MetricTag::Jaccard,
    }
}

/// Full re-metric: squared-Euclidean → k-NN (k clamped to `n`) → expansion →
/// reweighting → Jaccard.
pub fn jaccard_from_embeddings(embeddings: &EmbeddingSet, k: usize) -> Result<DistanceMatrix> {
    let dist = pairwise_sq_euclidean(embeddings, embeddings)?;
    jaccard_from_distances(&dist, k)
}

pub fn jaccard_from_distances(dist: &DistanceMatrix, k: usize) -> Result<DistanceMatrix> {
    let nbrs = knn(dist, k.min(dist.n()))?;
    let sets = k_reciprocal_expand(&nbrs);
    Ok(jaccard_distance(&reweight(dist, &sets)))
}
