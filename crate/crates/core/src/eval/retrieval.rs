//! Ranked retrieval evaluation: gallery ranking under the two dataset
//! protocols, average precision and cumulative matching characteristics.

use log::info;
use serde::{Deserialize, Serialize};

use crate::dataset::{EmbeddingSet, SampleMeta};
use crate::error::{Error, Result};
use crate::metric::sq_euclidean;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalProtocol {
    /// Gallery entries sharing both camera and identity with the query are
    /// dropped.
    #[default]
    CrossCamera,
    /// Only the query itself is dropped.
    AllGallery,
}

impl std::str::FromStr for RetrievalProtocol {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "cross_camera" => Ok(RetrievalProtocol::CrossCamera),
            "all_gallery" => Ok(RetrievalProtocol::AllGallery),
            other => Err(format!("unknown protocol {other:?}")),
        }
    }
}

fn keep(query: &SampleMeta, entry: &SampleMeta, protocol: RetrievalProtocol) -> bool {
    if entry.index == query.index {
        return false;
    }
    match protocol {
        RetrievalProtocol::AllGallery => true,
        RetrievalProtocol::CrossCamera => {
            !(entry.camera == query.camera && entry.gt_id.is_some() && entry.gt_id == query.gt_id)
        }
    }
}

/// Positions into `gallery` sorted by ascending squared distance to `query`
/// (ties by position), after protocol filtering.
pub fn rank_gallery(
    query: &[f64],
    query_meta: &SampleMeta,
    gallery: &EmbeddingSet,
    gallery_meta: &[SampleMeta],
    protocol: RetrievalProtocol,
) -> Result<Vec<usize>> {
    if query.len() != gallery.dim() {
        return Err(Error::DimensionMismatch {
            expected: gallery.dim(),
            actual: query.len(),
        });
    }
    if gallery_meta.len() != gallery.len() {
        return Err(Error::CountMismatch {
            metas: gallery_meta.len(),
            embeddings: gallery.len(),
        });
    }
    let mut ranked: Vec<(f64, usize)> = (0..gallery.len())
        .filter(|&g| keep(query_meta, &gallery_meta[g], protocol))
        .map(|g| (sq_euclidean(query, gallery.row(g)), g))
        .collect();
    if ranked.is_empty() {
        return Err(Error::EmptyGallery);
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(ranked.into_iter().map(|(_, g)| g).collect())
}

/// Mean over relevant positions `r` of precision at `r`; `None` when nothing
/// is relevant.
pub fn average_precision(relevant: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, _) in relevant.iter().enumerate().filter(|(_, &r)| r) {
        hits += 1;
        total += hits as f64 / (rank + 1) as f64;
    }
    (hits > 0).then(|| total / hits as f64)
}

/// Fraction of rankings whose first relevant item is within the top `r`, for
/// each requested `r`. Rankings without a relevant item count as misses.
pub fn cmc(rankings: &[Vec<bool>], ranks: &[usize]) -> Vec<f64> {
    if rankings.is_empty() {
        return vec![0.0; ranks.len()];
    }
    let first_hits: Vec<Option<usize>> =
        rankings.iter().map(|r| r.iter().position(|&x| x)).collect();
    ranks
        .iter()
        .map(|&r| {
            let hit = first_hits
                .iter()
                .filter(|h| h.is_some_and(|pos| pos < r))
                .count();
            hit as f64 / rankings.len() as f64
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub map: f64,
    pub ranks: Vec<usize>,
    pub cmc: Vec<f64>,
    pub evaluated_queries: usize,
    /// Queries without any admissible true match.
    pub excluded_queries: usize,
}

pub const DEFAULT_CMC_RANKS: [usize; 3] = [1, 5, 20];

/// Ranks every query against the gallery and aggregates mAP and CMC in query
/// order. Queries lacking ground truth or true matches are excluded.
pub fn evaluate_retrieval(
    queries: &EmbeddingSet,
    query_meta: &[SampleMeta],
    gallery: &EmbeddingSet,
    gallery_meta: &[SampleMeta],
    protocol: RetrievalProtocol,
    ranks: &[usize],
) -> Result<RetrievalReport> {
    let mut rankings = Vec::new();
    let mut ap_sum = 0.0;
    let mut excluded = 0;
    for (q, meta) in query_meta.iter().enumerate() {
        let Some(id) = meta.gt_id.as_ref() else {
            excluded += 1;
            continue;
        };
        let order = match rank_gallery(queries.row(q), meta, gallery, gallery_meta, protocol) {
            Ok(order) => order,
            Err(Error::EmptyGallery) => {
                excluded += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let relevant: Vec<bool> = order
            .iter()
            .map(|&g| gallery_meta[g].gt_id.as_ref() == Some(id))
            .collect();
        match average_precision(&relevant) {
            Some(ap) => {
                ap_sum += ap;
                rankings.push(relevant);
            }
            None => excluded += 1,
        }
    }
    if excluded > 0 {
        info!("{excluded} queries excluded from retrieval metrics (no admissible match)");
    }
    let evaluated = rankings.len();
    Ok(RetrievalReport {
        map: if evaluated > 0 {
            ap_sum / evaluated as f64
        } else {
            0.0
        },
        ranks: ranks.to_vec(),
        cmc: cmc(&rankings, ranks),
        evaluated_queries: evaluated,
        excluded_queries: excluded,
    })
}
