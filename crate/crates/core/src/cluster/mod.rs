//! Progressive clustering: per-viewpoint density clustering on the Jaccard
//! re-metric, noise re-assignment, and threshold-gated cross-viewpoint merging.

mod dbscan;
mod merge;
mod noise;
mod union_find;

use std::collections::BTreeMap;

pub use dbscan::{dbscan, DbscanParams};
pub use merge::{compute_tau, merge_candidates, second_period, MergeCandidate, SecondPeriod, Tau};
pub use noise::{noise_select, noise_to_singletons, NoiseSelectionStats};
pub use union_find::DisjointSet;

use crate::config::PipelineConfig;
use crate::dataset::{EmbeddingSet, Viewpoint};
use crate::error::Result;
use crate::metric::{jaccard_from_embeddings, DistanceMatrix, MetricTag};
use crate::state::{ClusterState, NOISE};

/// Jaccard matrix of one clustering group, indexed locally.
#[derive(Clone, Debug)]
pub struct JaccardGroup {
    /// `None` when the group ignores viewpoints.
    pub viewpoint: Option<Viewpoint>,
    /// Ascending sample indices; local index `l` is `indices[l]`.
    pub indices: Vec<usize>,
    pub jaccard: DistanceMatrix,
}

#[derive(Clone, Debug)]
pub struct FirstPeriod {
    /// Cluster labels are disjoint across groups; noise is preserved.
    pub state: ClusterState,
    pub groups: Vec<JaccardGroup>,
}

/// Clusters each group independently and offsets labels so that they never
/// collide. Groups with a single sample become singleton clusters directly.
pub fn cluster_groups(
    embeddings: &EmbeddingSet,
    groups: Vec<(Option<Viewpoint>, Vec<usize>)>,
    viewpoint_of: Vec<Option<Viewpoint>>,
    cfg: &PipelineConfig,
) -> Result<FirstPeriod> {
    let params = DbscanParams::new(cfg.eps, cfg.min_pts)?;
    let mut labels = vec![NOISE; embeddings.len()];
    let mut next = 0i64;
    let mut out = Vec::with_capacity(groups.len());
    for (viewpoint, indices) in groups {
        let jaccard = if indices.len() == 1 {
            labels[indices[0]] = next;
            next += 1;
            DistanceMatrix::from_fn(1, MetricTag::Jaccard, |_, _| 0.0)
        } else {
            let jaccard = jaccard_from_embeddings(&embeddings.select(&indices), cfg.k)?;
            let local = dbscan(&jaccard, params);
            let found = local.iter().copied().max().unwrap_or(NOISE) + 1;
            for (&i, &l) in indices.iter().zip(&local) {
                if l != NOISE {
                    labels[i] = next + l;
                }
            }
            next += found;
            jaccard
        };
        out.push(JaccardGroup {
            viewpoint,
            indices,
            jaccard,
        });
    }
    Ok(FirstPeriod {
        state: ClusterState::new(labels, viewpoint_of),
        groups: out,
    })
}

/// Per-viewpoint clustering. Every sample of `embeddings` must appear in
/// exactly one partition list.
pub fn first_period(
    embeddings: &EmbeddingSet,
    partition: &BTreeMap<Viewpoint, Vec<usize>>,
    cfg: &PipelineConfig,
) -> Result<FirstPeriod> {
    let mut viewpoint_of = vec![None; embeddings.len()];
    for (&v, idx) in partition {
        for &i in idx {
            viewpoint_of[i] = Some(v);
        }
    }
    let groups = partition
        .iter()
        .map(|(&v, idx)| (Some(v), idx.clone()))
        .collect();
    cluster_groups(embeddings, groups, viewpoint_of, cfg)
}

/// Clustering of all samples at once, ignoring viewpoints for grouping.
pub fn global_period(
    embeddings: &EmbeddingSet,
    viewpoint_of: Vec<Option<Viewpoint>>,
    cfg: &PipelineConfig,
) -> Result<FirstPeriod> {
    let all = (0..embeddings.len()).collect();
    cluster_groups(embeddings, vec![(None, all)], viewpoint_of, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(center: [f64; 3], n: usize, spread: f64) -> Vec<[f64; 3]> {
        (0..n)
            .map(|i| {
                let t = i as f64 * spread;
                [center[0] + t, center[1] - t, center[2] + 0.5 * t]
            })
            .collect()
    }

    #[test]
    fn clusters_stay_within_viewpoints() {
        let mut rows = blob([1.0, 0.0, 0.0], 6, 0.01);
        rows.extend(blob([1.0, 0.0, 0.0], 6, 0.01));
        let e = EmbeddingSet::from_rows(&rows).unwrap().normalized();
        let partition = BTreeMap::from([
            (Viewpoint::Front, (0..6).collect()),
            (Viewpoint::Rear, (6..12).collect()),
        ]);
        let cfg = PipelineConfig {
            k: 4,
            eps: 0.5,
            ..Default::default()
        };
        let fp = first_period(&e, &partition, &cfg).unwrap();
        assert_eq!(fp.state.noise_count(), 0);
        assert_eq!(fp.state.cluster_count(), 2);
        for i in 0..12 {
            for j in 0..12 {
                if fp.state.label(i) == fp.state.label(j) {
                    assert_eq!(fp.state.viewpoint(i), fp.state.viewpoint(j));
                }
            }
        }
    }

    #[test]
    fn oversized_k_is_clamped_and_singletons_skip_dbscan() {
        let rows = [[1.0, 0.0, 0.0], [0.99, 0.1, 0.0], [0.0, 1.0, 0.0]];
        let e = EmbeddingSet::from_rows(&rows).unwrap().normalized();
        let partition =
            BTreeMap::from([(Viewpoint::Front, vec![0, 1]), (Viewpoint::Side, vec![2])]);
        let fp = first_period(&e, &partition, &PipelineConfig::default()).unwrap();
        assert_eq!(fp.state.label(2), 0);
        assert!(fp.state.is_noise(0) && fp.state.is_noise(1));
        assert_eq!(fp.groups.len(), 2);
    }
}
