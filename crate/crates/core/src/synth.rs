//! Synthetic embeddings with the viewpoint-over-identity geometry, plus a
//! viewpoint-label corruption helper.
//!
//! Every viewpoint owns an offset direction; the directions are mutually
//! orthonormal and scaled so that each coordinate has magnitude about
//! `viewpoint_offset_scale`. Identity centres are Gaussian with per-coordinate
//! spread `identity_spread`, projected away from the offset directions so
//! identity and viewpoint never interfere. A sample is
//! `normalize(offset + centre + noise)`.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{dot, normalize_in_place, EmbeddingSet, SampleMeta, Split, Viewpoint};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Training identities.
    pub identities: usize,
    pub viewpoints: Vec<Viewpoint>,
    pub dim: usize,
    pub identity_spread: f64,
    pub viewpoint_offset_scale: f64,
    pub within_cluster_noise: f64,
    pub samples_per_identity_viewpoint: usize,
    pub cameras: usize,
    /// Extra identities emitted as query/gallery samples for retrieval
    /// evaluation. Their first sample is the query, the rest are gallery.
    pub test_identities: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            identities: 50,
            viewpoints: Viewpoint::ALL.to_vec(),
            dim: 64,
            identity_spread: 1.0,
            viewpoint_offset_scale: 1.3,
            within_cluster_noise: 0.25,
            samples_per_identity_viewpoint: 10,
            cameras: 20,
            test_identities: 0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_owned()));
        if self.identities == 0 || self.samples_per_identity_viewpoint == 0 {
            return fail("need at least one identity and one sample per identity-viewpoint");
        }
        if self.viewpoints.is_empty() {
            return fail("need at least one viewpoint");
        }
        let mut seen = self.viewpoints.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.viewpoints.len() {
            return fail("viewpoints must be distinct");
        }
        if self.dim <= self.viewpoints.len() {
            return fail("dim must exceed the number of viewpoints");
        }
        if self.cameras == 0 {
            return fail("need at least one camera");
        }
        let (vp, id, w) = (
            self.viewpoint_offset_scale,
            self.identity_spread,
            self.within_cluster_noise,
        );
        if !(vp.is_finite() && vp > id && id > w && w > 0.0) {
            return fail("spreads must satisfy viewpoint_offset_scale > identity_spread > within_cluster_noise > 0");
        }
        Ok(())
    }
}

/// Generated embeddings and metadata; metadata `index` equals the row.
#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub embeddings: EmbeddingSet,
    pub meta: Vec<SampleMeta>,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, bi)| *x -= c * bi);
    }
}

/// Orthonormal directions drawn by Gram-Schmidt on Gaussian vectors.
fn orthonormal_directions(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = gaussian(rng, dim);
        project_out(&mut v, &basis);
        if normalize_in_place(&mut v) {
            basis.push(v);
        }
    }
    basis
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = cfg.dim;
    let directions = orthonormal_directions(&mut rng, cfg.viewpoints.len(), dim);
    let offset_norm = cfg.viewpoint_offset_scale * (dim as f64).sqrt();
    let offsets: Vec<Vec<f64>> = directions
        .iter()
        .map(|u| u.iter().map(|x| x * offset_norm).collect())
        .collect();
    let noise =
        Normal::new(0.0, cfg.within_cluster_noise).map_err(|e| Error::Config(e.to_string()))?;

    struct Draft {
        row: Vec<f64>,
        meta: SampleMeta,
    }
    let mut drafts = Vec::new();
    let total_ids = cfg.identities + cfg.test_identities;
    for id in 0..total_ids {
        let mut centre: Vec<f64> = gaussian(&mut rng, dim)
            .into_iter()
            .map(|x| x * cfg.identity_spread)
            .collect();
        project_out(&mut centre, &directions);
        let test = id >= cfg.identities;
        let mut first = true;
        for (v, offset) in cfg.viewpoints.iter().zip(&offsets) {
            for _ in 0..cfg.samples_per_identity_viewpoint {
                let mut row: Vec<f64> = offset
                    .iter()
                    .zip(&centre)
                    .map(|(o, c)| o + c + noise.sample(&mut rng))
                    .collect();
                normalize_in_place(&mut row);
                let split = match (test, first) {
                    (false, _) => Split::Train,
                    (true, true) => Split::Query,
                    (true, false) => Split::Gallery,
                };
                first = false;
                let camera = format!("c{:03}", rng.random_range(0..cfg.cameras));
                drafts.push(Draft {
                    row,
                    meta: SampleMeta {
                        index: 0,
                        camera,
                        viewpoint: Some(*v),
                        gt_id: Some(format!("id{id:04}")),
                        split,
                    },
                });
            }
        }
    }

    // Shuffle so that index order carries no identity information.
    let order = index::sample(&mut rng, drafts.len(), drafts.len()).into_vec();
    let mut data = Vec::with_capacity(drafts.len() * dim);
    let mut meta = Vec::with_capacity(drafts.len());
    for (index, &src) in order.iter().enumerate() {
        data.extend_from_slice(&drafts[src].row);
        meta.push(SampleMeta {
            index,
            ..drafts[src].meta.clone()
        });
    }
    Ok(SynthDataset {
        embeddings: EmbeddingSet::new(dim, data)?,
        meta,
    })
}

/// Relabels exactly `⌊rate · n_train⌋` uniformly chosen train samples with a
/// uniformly chosen different viewpoint.
pub fn inject_viewpoint_errors(
    meta: &[SampleMeta],
    rate: f64,
    seed: u64,
) -> Result<Vec<SampleMeta>> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!("error rate {rate} outside [0, 1]")));
    }
    let train: Vec<usize> = meta
        .iter()
        .enumerate()
        .filter(|(_, m)| m.split == Split::Train && m.viewpoint.is_some())
        .map(|(pos, _)| pos)
        .collect();
    let flips = (rate * train.len() as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = index::sample(&mut rng, train.len(), flips);
    let mut out = meta.to_vec();
    for k in chosen.iter() {
        let m = &mut out[train[k]];
        let old = m.viewpoint.expect("filtered above");
        let mut alternatives = Viewpoint::ALL.to_vec();
        alternatives.retain(|&v| v != old);
        m.viewpoint = Some(alternatives[rng.random_range(0..alternatives.len())]);
    }
    Ok(out)
}
