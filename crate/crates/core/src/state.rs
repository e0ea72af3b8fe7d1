//! Pseudo-label bookkeeping.

use std::collections::{BTreeMap, HashMap};

use crate::dataset::Viewpoint;

/// Label carried by samples that density clustering left unassigned.
pub const NOISE: i64 = -1;

/// A partition of sample indices into clusters plus a noise set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterState {
    labels: Vec<i64>,
    viewpoint_of: Vec<Option<Viewpoint>>,
}

impl ClusterState {
    pub fn new(labels: Vec<i64>, viewpoint_of: Vec<Option<Viewpoint>>) -> Self {
        assert_eq!(
            labels.len(),
            viewpoint_of.len(),
            "labels/viewpoints length mismatch"
        );
        Self {
            labels,
            viewpoint_of,
        }
    }

    /// Every sample in its own cluster.
    pub fn singletons(viewpoint_of: Vec<Option<Viewpoint>>) -> Self {
        let labels = (0..viewpoint_of.len() as i64).collect();
        Self::new(labels, viewpoint_of)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> i64 {
        self.labels[i]
    }

    pub fn set_label(&mut self, i: usize, label: i64) {
        self.labels[i] = label;
    }

    pub fn viewpoint(&self, i: usize) -> Option<Viewpoint> {
        self.viewpoint_of[i]
    }

    pub fn viewpoints(&self) -> &[Option<Viewpoint>] {
        &self.viewpoint_of
    }

    pub fn is_noise(&self, i: usize) -> bool {
        self.labels[i] == NOISE
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    /// Number of distinct non-noise labels.
    pub fn cluster_count(&self) -> usize {
        self.members().len()
    }

    /// One past the largest label in use, i.e. a label guaranteed to be free.
    pub fn next_label(&self) -> i64 {
        self.labels
            .iter()
            .copied()
            .max()
            .map_or(0, |m| m.max(-1) + 1)
    }

    /// Label → ascending member indices, noise excluded.
    pub fn members(&self) -> BTreeMap<i64, Vec<usize>> {
        let mut out: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            if l != NOISE {
                out.entry(l).or_default().push(i);
            }
        }
        out
    }

    /// Relabels clusters densely as `0..C` in order of first appearance by
    /// sample index. Noise stays noise.
    pub fn compact(&self) -> Self {
        Self::new(compact_labels(&self.labels), self.viewpoint_of.clone())
    }

    pub fn into_labels(self) -> Vec<i64> {
        self.labels
    }
}

/// Dense relabelling by first appearance; `NOISE` entries are preserved.
pub fn compact_labels(labels: &[i64]) -> Vec<i64> {
    let mut map: HashMap<i64, i64> = HashMap::new();
    labels
        .iter()
        .map(|&l| {
            if l == NOISE {
                NOISE
            } else {
                let next = map.len() as i64;
                *map.entry(l).or_insert(next)
            }
        })
        .collect()
}
