//! Tunables for the clustering pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normaliser used in the denominator of adjusted mutual information.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmiNormalizer {
    #[default]
    Arithmetic,
    Max,
}

/// How the cross-viewpoint merge threshold picks its order statistic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiRank {
    /// 1-indexed rank among ascending cross-viewpoint pair distances.
    Rank(usize),
    /// Fraction of the cross-viewpoint pair count, rounded up (at least 1).
    Quantile(f64),
}

impl TiRank {
    /// Resolves to a 1-indexed rank for `pairs` candidate pairs.
    pub fn resolve(self, pairs: usize) -> usize {
        match self {
            TiRank::Rank(r) => r,
            TiRank::Quantile(q) => ((q * pairs as f64).ceil() as usize).max(1),
        }
    }
}

impl Default for TiRank {
    fn default() -> Self {
        TiRank::Rank(1200)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Neighbour count for the k-reciprocal re-metric.
    pub k: usize,
    /// Reciprocal-check depth for noise selection.
    pub k_tilde: usize,
    pub ti: TiRank,
    /// Softmax temperature of the memory bank.
    pub beta: f64,
    /// Density radius on the Jaccard scale.
    pub eps: f64,
    pub min_pts: usize,
    pub recognition_epochs: usize,
    /// Step size of the feature update during the recognition stage.
    pub recognition_rate: f64,
    pub iterations: usize,
    pub refine_rate: f64,
    pub refine_passes: usize,
    /// When false, noise left by density clustering becomes singletons.
    pub noise_selection: bool,
    pub seed: u64,
    pub ami_normalizer: AmiNormalizer,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 20,
            k_tilde: 2,
            ti: TiRank::default(),
            beta: 0.1,
            eps: 0.35,
            min_pts: 4,
            recognition_epochs: 20,
            recognition_rate: 0.002,
            iterations: 10,
            refine_rate: 0.5,
            refine_passes: 1,
            noise_selection: true,
            seed: 0,
            ami_normalizer: AmiNormalizer::Arithmetic,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_owned()));
        if self.k < 2 {
            return fail("k must be at least 2");
        }
        if self.k_tilde < 1 {
            return fail("k_tilde must be at least 1");
        }
        match self.ti {
            TiRank::Rank(0) => return fail("ti must be at least 1"),
            TiRank::Quantile(q) if !(q > 0.0 && q <= 1.0) => {
                return fail("ti quantile must lie in (0, 1]")
            }
            _ => {}
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return fail("beta must be positive");
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return fail("eps must lie in (0, 1]");
        }
        if self.min_pts < 2 {
            return fail("min_pts must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.refine_rate) {
            return fail("refine_rate must lie in [0, 1]");
        }
        if !(self.recognition_rate >= 0.0 && self.recognition_rate.is_finite()) {
            return fail("recognition_rate must be non-negative");
        }
        Ok(())
    }
}
