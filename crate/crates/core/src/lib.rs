//! Viewpoint-aware progressive clustering for unsupervised re-identification
//! pseudo-labels.
//!
//! The crate works on precomputed embeddings: it partitions train samples by
//! viewpoint, clusters each partition on a k-reciprocal Jaccard distance,
//! re-assigns density noise, merges clusters across viewpoints under a frozen
//! threshold, and refines the features against a class memory between
//! iterations. Evaluation, synthetic data and file formats live alongside.

pub mod cluster;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod io;
pub mod memory;
pub mod metric;
pub mod pipeline;
pub mod state;
pub mod synth;

pub use config::{AmiNormalizer, PipelineConfig, TiRank};
pub use dataset::{Dataset, EmbeddingSet, SampleMeta, Split, Viewpoint};
pub use error::{Error, Result};
pub use pipeline::{run_baseline_global, run_pipeline, RunManifest, RunMode, RunOutput};
pub use state::{ClusterState, NOISE};
