//! Cross-viewpoint merging: the frozen threshold τ and the single-linkage
//! union of clusters whose members come closer than τ across viewpoints.

use std::collections::{BTreeMap, HashMap};

use log::warn;
use serde::Serialize;

use super::union_find::DisjointSet;
use crate::dataset::{EmbeddingSet, Viewpoint};
use crate::error::{Error, Result};
use crate::metric::sq_euclidean;
use crate::state::{ClusterState, NOISE};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tau {
    pub value: f64,
    /// 1-indexed rank actually used.
    pub rank: usize,
    /// Number of cross-viewpoint pairs.
    pub pairs: usize,
    /// The requested rank exceeded `pairs` and was clamped.
    pub clamped: bool,
}

/// Visits every unordered pair of samples from different viewpoints.
fn for_each_cross_pair(
    embeddings: &EmbeddingSet,
    groups: &[(Viewpoint, &[usize])],
    mut f: impl FnMut(usize, usize, f64),
) {
    for (a, (_, left)) in groups.iter().enumerate() {
        for (_, right) in &groups[a + 1..] {
            for &i in left.iter() {
                let fi = embeddings.row(i);
                for &j in right.iter() {
                    f(i, j, sq_euclidean(fi, embeddings.row(j)));
                }
            }
        }
    }
}

/// The `ti`-th smallest (1-indexed) squared-Euclidean distance among pairs of
/// samples from different viewpoints.
pub fn compute_tau(
    embeddings: &EmbeddingSet,
    partition: &BTreeMap<Viewpoint, Vec<usize>>,
    ti: usize,
) -> Result<Tau> {
    if partition.len() < 2 {
        return Err(Error::Config(
            "the merge threshold needs samples from at least two viewpoints".into(),
        ));
    }
    if ti == 0 {
        return Err(Error::Config("ti must be at least 1".into()));
    }
    let groups: Vec<(Viewpoint, &[usize])> = partition
        .iter()
        .map(|(v, idx)| (*v, idx.as_slice()))
        .collect();
    let mut distances = Vec::new();
    for_each_cross_pair(embeddings, &groups, |_, _, d| distances.push(d));
    let pairs = distances.len();
    let clamped = ti > pairs;
    if clamped {
        warn!("ti = {ti} exceeds the {pairs} cross-viewpoint pairs; using the largest pair");
    }
    let rank = ti.min(pairs);
    let (_, &mut value, _) = distances.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(Tau {
        value,
        rank,
        pairs,
        clamped,
    })
}

/// A pair of clusters linked across viewpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MergeCandidate {
    pub cluster_a: i64,
    pub cluster_b: i64,
    pub viewpoint_a: Viewpoint,
    pub viewpoint_b: Viewpoint,
    /// Smallest cross-viewpoint squared distance between the two clusters.
    pub distance: f64,
}

/// Cluster pairs with a cross-viewpoint member pair closer than `tau`, in
/// ascending order of their single-linkage distance.
pub fn merge_candidates(
    state: &ClusterState,
    embeddings: &EmbeddingSet,
    tau: f64,
) -> Vec<MergeCandidate> {
    let mut by_view: BTreeMap<Viewpoint, Vec<usize>> = BTreeMap::new();
    for i in 0..state.len() {
        if let Some(v) = state.viewpoint(i) {
            by_view.entry(v).or_default().push(i);
        }
    }
    let groups: Vec<(Viewpoint, &[usize])> = by_view
        .iter()
        .map(|(v, idx)| (*v, idx.as_slice()))
        .collect();

    let mut best: HashMap<(i64, i64), MergeCandidate> = HashMap::new();
    for_each_cross_pair(embeddings, &groups, |i, j, d| {
        if d >= tau {
            return;
        }
        let (li, lj) = (state.label(i), state.label(j));
        if li == lj {
            return;
        }
        let (a, b) = if li < lj { (i, j) } else { (j, i) };
        let candidate = MergeCandidate {
            cluster_a: state.label(a),
            cluster_b: state.label(b),
            viewpoint_a: state.viewpoint(a).expect("grouped by viewpoint"),
            viewpoint_b: state.viewpoint(b).expect("grouped by viewpoint"),
            distance: d,
        };
        best.entry((candidate.cluster_a, candidate.cluster_b))
            .and_modify(|c| {
                if d < c.distance {
                    *c = candidate;
                }
            })
            .or_insert(candidate);
    });

    let mut out: Vec<MergeCandidate> = best.into_values().collect();
    out.sort_by(|x, y| {
        x.distance
            .total_cmp(&y.distance)
            .then(x.cluster_a.cmp(&y.cluster_a))
            .then(x.cluster_b.cmp(&y.cluster_b))
    });
    out
}

#[derive(Clone, Debug)]
pub struct SecondPeriod {
    pub state: ClusterState,
    pub candidates: Vec<MergeCandidate>,
    /// Unions that joined two previously separate clusters.
    pub merges: usize,
}

/// Unions clusters along every candidate (transitively) and relabels densely.
pub fn second_period(
    state: &ClusterState,
    embeddings: &EmbeddingSet,
    tau: f64,
) -> Result<SecondPeriod> {
    if state.labels().contains(&NOISE) {
        return Err(Error::Shape(
            "second period requires every sample to be labelled".into(),
        ));
    }
    let compact = state.compact();
    let candidates = merge_candidates(&compact, embeddings, tau);
    let mut sets = DisjointSet::new(compact.cluster_count());
    let merges = candidates
        .iter()
        .filter(|c| sets.union(c.cluster_a as usize, c.cluster_b as usize))
        .count();
    let labels: Vec<i64> = compact
        .labels()
        .iter()
        .map(|&l| sets.find(l as usize) as i64)
        .collect();
    Ok(SecondPeriod {
        state: ClusterState::new(labels, compact.viewpoints().to_vec()).compact(),
        candidates,
        merges,
    })
}
