//! Re-assignment of density-clustering noise.
//!
//! Each noise sample `s` is paired with its nearest same-group neighbour `p`
//! under the group's Jaccard matrix, and pairs are visited from most to least
//! similar. The reciprocal test `s ∈ top_k̃[p]` decides whether `s` is a
//! reliable hard positive: it then joins `p`'s cluster, or, if `p` is noise
//! too, the two seed a new cluster that keeps absorbing reciprocal noise
//! neighbours. Samples failing the test become singleton clusters.

use std::collections::VecDeque;

use serde::Serialize;

use super::JaccardGroup;
use crate::metric::ranked_others;
use crate::state::{ClusterState, NOISE};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct NoiseSelectionStats {
    /// Noise samples that joined an existing cluster.
    pub joined: usize,
    /// New clusters seeded by a reciprocal noise pair.
    pub new_clusters: usize,
    /// Noise samples absorbed into new clusters, seeds included.
    pub new_cluster_members: usize,
    /// Noise samples that became singleton clusters.
    pub singletons: usize,
}

/// Cached `top_k̃` lists (self excluded) within one group.
struct TopLists<'a> {
    group: &'a JaccardGroup,
    k: usize,
    cache: Vec<Option<Vec<usize>>>,
}

impl<'a> TopLists<'a> {
    fn new(group: &'a JaccardGroup, k: usize) -> Self {
        Self {
            group,
            k,
            cache: vec![None; group.indices.len()],
        }
    }

    fn get(&mut self, local: usize) -> &[usize] {
        let (group, k) = (self.group, self.k);
        self.cache[local].get_or_insert_with(|| ranked_others(&group.jaccard, local, k))
    }

    fn contains(&mut self, local: usize, other: usize) -> bool {
        self.get(local).contains(&other)
    }
}

/// Resolves every noise label in `state`. Labels are not compacted.
pub fn noise_select(
    state: &ClusterState,
    groups: &[JaccardGroup],
    k_tilde: usize,
) -> (ClusterState, NoiseSelectionStats) {
    let mut out = state.clone();
    let mut stats = NoiseSelectionStats::default();
    let mut next = out.next_label();

    for group in groups {
        let idx = &group.indices;
        let noise: Vec<usize> = (0..idx.len()).filter(|&l| out.is_noise(idx[l])).collect();
        if noise.is_empty() {
            continue;
        }
        let mut top = TopLists::new(group, k_tilde);

        let mut pairs: Vec<(usize, Option<usize>, f64)> = noise
            .iter()
            .map(|&s| match ranked_others(&group.jaccard, s, 1).first() {
                Some(&p) => (s, Some(p), group.jaccard.get(s, p)),
                None => (s, None, f64::INFINITY),
            })
            .collect();
        pairs.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));

        for (s, p, _) in pairs {
            if !out.is_noise(idx[s]) {
                continue;
            }
            let Some(p) = p.filter(|&p| top.contains(p, s)) else {
                out.set_label(idx[s], next);
                next += 1;
                stats.singletons += 1;
                continue;
            };
            if !out.is_noise(idx[p]) {
                out.set_label(idx[s], out.label(idx[p]));
                stats.joined += 1;
                continue;
            }

            let label = next;
            next += 1;
            stats.new_clusters += 1;
            out.set_label(idx[s], label);
            out.set_label(idx[p], label);
            stats.new_cluster_members += 2;
            let mut queue = VecDeque::from([s, p]);
            while let Some(c) = queue.pop_front() {
                let candidates = top.get(c).to_vec();
                for cand in candidates {
                    if out.is_noise(idx[cand]) && top.contains(cand, c) {
                        out.set_label(idx[cand], label);
                        stats.new_cluster_members += 1;
                        queue.push_back(cand);
                    }
                }
            }
        }
    }

    // Samples outside every group cannot be paired.
    for i in 0..out.len() {
        if out.label(i) == NOISE {
            out.set_label(i, next);
            next += 1;
            stats.singletons += 1;
        }
    }
    (out, stats)
}

/// Ablation path: every noise sample becomes its own cluster.
pub fn noise_to_singletons(state: &ClusterState) -> (ClusterState, NoiseSelectionStats) {
    let mut out = state.clone();
    let mut next = out.next_label();
    let mut stats = NoiseSelectionStats::default();
    for i in 0..out.len() {
        if out.is_noise(i) {
            out.set_label(i, next);
            next += 1;
            stats.singletons += 1;
        }
    }
    (out, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{DistanceMatrix, MetricTag};

    fn group(n: usize, d: impl Fn(usize, usize) -> f64) -> JaccardGroup {
        JaccardGroup {
            viewpoint: None,
            indices: (0..n).collect(),
            jaccard: DistanceMatrix::from_fn(n, MetricTag::Jaccard, |i, j| {
                if i == j {
                    0.0
                } else {
                    d(i.min(j), i.max(j))
                }
            }),
        }
    }

    #[test]
    fn reliable_noise_joins_cluster() {
        // Cluster {0, 1, 2}; noise 3 is closest to 0, and 3 ∈ top_2[0].
        let g = group(4, |i, j| match (i, j) {
            (0, 3) => 0.2,
            (0, 1) => 0.1,
            (0, 2) => 0.5,
            (1, 2) => 0.1,
            _ => 0.9,
        });
        let state = ClusterState::new(vec![0, 0, 0, NOISE], vec![None; 4]);
        let (out, stats) = noise_select(&state, &[g], 2);
        assert_eq!(out.labels(), &[0, 0, 0, 0]);
        assert_eq!(stats.joined, 1);
    }

    #[test]
    fn mutual_noise_pair_forms_cluster() {
        let g = group(4, |i, j| match (i, j) {
            (2, 3) => 0.2,
            (0, 1) => 0.1,
            _ => 0.9,
        });
        let state = ClusterState::new(vec![0, 0, NOISE, NOISE], vec![None; 4]);
        let (out, stats) = noise_select(&state, &[g], 2);
        assert_eq!(out.label(2), out.label(3));
        assert_ne!(out.label(2), 0);
        assert_eq!(stats.new_clusters, 1);
        assert_eq!(out.noise_count(), 0);
    }

    #[test]
    fn unreciprocated_noise_becomes_singleton() {
        // 4's nearest is 0, but 0's top-1 is 1, so 4 ∉ top_1[0].
        let g = group(5, |i, j| match (i, j) {
            (0, 1) | (0, 2) | (1, 2) | (0, 3) | (1, 3) | (2, 3) => 0.1,
            (0, 4) => 0.4,
            _ => 0.9,
        });
        let state = ClusterState::new(vec![0, 0, 0, 0, NOISE], vec![None; 5]);
        let (out, stats) = noise_select(&state, &[g], 1);
        assert_eq!(stats.singletons, 1);
        assert_eq!(out.label(4), 1);
    }

    #[test]
    fn new_cluster_grows_through_reciprocal_neighbours() {
        // Noise chain 0-1-2 with mutual top-2 relations.
        let g = group(3, |i, j| match (i, j) {
            (0, 1) => 0.1,
            (1, 2) => 0.2,
            _ => 0.3,
        });
        let state = ClusterState::new(vec![NOISE; 3], vec![None; 3]);
        let (out, stats) = noise_select(&state, &[g], 2);
        assert_eq!(out.labels(), &[0, 0, 0]);
        assert_eq!(stats.new_clusters, 1);
        assert_eq!(stats.new_cluster_members, 3);
    }

    #[test]
    fn singleton_ablation() {
        let state = ClusterState::new(vec![0, NOISE, NOISE], vec![None; 3]);
        let (out, stats) = noise_to_singletons(&state);
        assert_eq!(out.labels(), &[0, 1, 2]);
        assert_eq!(stats.singletons, 2);
    }
}
