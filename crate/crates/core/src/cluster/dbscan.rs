//! Density-based clustering over a precomputed distance matrix.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::metric::DistanceMatrix;
use crate::state::NOISE;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DbscanParams {
    /// Neighbourhood radius (inclusive) on the scale of the input matrix.
    pub eps: f64,
    /// Minimum neighbourhood size for a core point, the point itself included.
    pub min_pts: usize,
}

impl DbscanParams {
    pub fn new(eps: f64, min_pts: usize) -> Result<Self> {
        if eps.is_nan() || eps <= 0.0 {
            return Err(Error::Config("eps must be positive".into()));
        }
        if min_pts < 2 {
            return Err(Error::Config("min_pts must be at least 2".into()));
        }
        Ok(Self { eps, min_pts })
    }
}

/// Labels `0..C` in discovery order, [`NOISE`] for unreachable points.
///
/// Points are scanned in ascending index order and each cluster is expanded
/// breadth-first before the next one starts, so a border point reachable from
/// several clusters belongs to the one discovered first.
pub fn dbscan(dist: &DistanceMatrix, params: DbscanParams) -> Vec<i64> {
    let n = dist.n();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            dist.row(i)
                .iter()
                .enumerate()
                .filter(|&(_, &d)| d <= params.eps)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let is_core: Vec<bool> = neighbors
        .iter()
        .map(|nb| nb.len() >= params.min_pts)
        .collect();

    let mut labels = vec![NOISE; n];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if labels[start] != NOISE || !is_core[start] {
            continue;
        }
        labels[start] = next;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if labels[q] == NOISE {
                    labels[q] = next;
                    if is_core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
        next += 1;
    }
    labels
}
