//! End-to-end progressive clustering over the train split of a dataset.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;

use crate::cluster::{
    compute_tau, first_period, global_period, noise_select, noise_to_singletons, second_period,
    NoiseSelectionStats, Tau,
};
use crate::config::PipelineConfig;
use crate::dataset::{Dataset, EmbeddingSet, Split, Viewpoint};
use crate::error::{Error, Result};
use crate::eval::{ami, MetricsReport};
use crate::io::{write_json, write_labels, LabelRow};
use crate::memory::{recognition_stage, refine_features, FeatureMemory};
use crate::synth::inject_viewpoint_errors;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Per-viewpoint clustering followed by cross-viewpoint merging.
    Viewpoint,
    /// One clustering over all samples, no merging.
    Global,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    pub first_period_clusters: usize,
    pub noise_before_selection: usize,
    pub noise_selection: NoiseSelectionStats,
    pub merges: usize,
    pub clusters: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ami: Option<f64>,
}

/// Everything needed to audit a run. Contains no wall-clock data, so equal
/// inputs give byte-identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub mode: RunMode,
    pub config: PipelineConfig,
    pub train_samples: usize,
    pub viewpoints: Vec<Viewpoint>,
    pub recognition_losses: Vec<f64>,
    /// Merge threshold, fixed after the recognition stage. Absent in global
    /// mode and when fewer than two viewpoints are present.
    pub tau: Option<Tau>,
    pub iterations: Vec<IterationRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub early_exit: Option<String>,
    /// Iteration whose labels were kept (0 = recognition-stage labels).
    pub best_iteration: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_ami: Option<f64>,
    pub best: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub manifest: RunManifest,
    /// Dataset indices of the clustered (train) samples.
    pub train_indices: Vec<usize>,
    /// Dense labels over `train_indices`, one entry per completed iteration.
    pub iteration_labels: Vec<Vec<i64>>,
    pub best_labels: Vec<i64>,
    /// Train features after the last refinement.
    pub features: EmbeddingSet,
    pub timings: Vec<StageTiming>,
}

impl RunOutput {
    pub fn final_ami(&self) -> Option<f64> {
        self.manifest.final_ami
    }

    /// AMI per completed iteration, when ground truth exists.
    pub fn ami_trajectory(&self) -> Vec<f64> {
        self.manifest
            .iterations
            .iter()
            .filter_map(|r| r.ami)
            .collect()
    }

    pub fn label_rows(&self, labels: &[i64], iteration: usize) -> Vec<LabelRow> {
        self.train_indices
            .iter()
            .zip(labels)
            .map(|(&index, &label)| LabelRow {
                index,
                label,
                iteration,
            })
            .collect()
    }

    /// Writes `labels.csv` (kept labeling), `labels_iter_XX.csv` per
    /// iteration, `manifest.json` and `timings.json` into `dir`.
    pub fn persist(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for (k, labels) in self.iteration_labels.iter().enumerate() {
            let rows = self.label_rows(labels, k + 1);
            write_labels(dir.join(format!("labels_iter_{:02}.csv", k + 1)), &rows)?;
        }
        let best = self.label_rows(&self.best_labels, self.manifest.best_iteration);
        write_labels(dir.join("labels.csv"), &best)?;
        write_json(dir.join("manifest.json"), &self.manifest)?;
        write_json(dir.join("timings.json"), &self.timings)
    }
}

struct Stopwatch(Vec<StageTiming>);

impl Stopwatch {
    fn time<T>(&mut self, stage: impl Into<String>, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.0.push(StageTiming {
            stage: stage.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(out)
    }
}

/// Ground-truth ids of the train samples, when every one has an id.
fn train_ground_truth<'a>(dataset: &'a Dataset, train: &[usize]) -> Option<Vec<&'a str>> {
    train
        .iter()
        .map(|&i| dataset.meta[i].gt_id.as_deref())
        .collect()
}

pub fn run_pipeline(dataset: &Dataset, cfg: &PipelineConfig) -> Result<RunOutput> {
    run(dataset, cfg, RunMode::Viewpoint)
}

/// Same loop without viewpoint partitioning or merging.
pub fn run_baseline_global(dataset: &Dataset, cfg: &PipelineConfig) -> Result<RunOutput> {
    run(dataset, cfg, RunMode::Global)
}

pub fn run(dataset: &Dataset, cfg: &PipelineConfig, mode: RunMode) -> Result<RunOutput> {
    cfg.validate()?;
    let train = dataset.indices_of(Split::Train);
    if train.len() < 2 {
        return Err(Error::Shape("need at least two train samples".into()));
    }
    let mut clock = Stopwatch(Vec::new());
    let n = train.len();
    let viewpoint_of: Vec<Option<Viewpoint>> =
        train.iter().map(|&i| dataset.meta[i].viewpoint).collect();
    let mut partition: BTreeMap<Viewpoint, Vec<usize>> = BTreeMap::new();
    for (local, v) in viewpoint_of.iter().enumerate() {
        let v = v.ok_or_else(|| {
            Error::Validation(vec![crate::dataset::ValidationIssue::MissingViewpoint {
                index: train[local],
            }])
        })?;
        partition.entry(v).or_default().push(local);
    }
    let truth = train_ground_truth(dataset, &train);
    let score = |labels: &[i64]| -> Result<Option<f64>> {
        truth
            .as_ref()
            .map(|t| ami(labels, t, cfg.ami_normalizer))
            .transpose()
    };

    let recognition = clock.time("recognition", || {
        recognition_stage(
            &dataset.embeddings.select(&train),
            cfg.recognition_epochs,
            cfg.recognition_rate,
            cfg.beta,
        )
    })?;
    let mut features = recognition.embeddings;

    let tau = match mode {
        RunMode::Viewpoint if partition.len() >= 2 => {
            let sizes: Vec<usize> = partition.values().map(Vec::len).collect();
            let total: usize = sizes.iter().sum();
            let pairs = sizes.iter().map(|s| s * (total - s)).sum::<usize>() / 2;
            let tau = clock.time("tau", || {
                compute_tau(&features, &partition, cfg.ti.resolve(pairs))
            })?;
            info!(
                "merge threshold fixed at {:.6} (rank {} of {})",
                tau.value, tau.rank, tau.pairs
            );
            Some(tau)
        }
        RunMode::Viewpoint => {
            warn!("fewer than two viewpoints present; the merging period is skipped");
            None
        }
        RunMode::Global => None,
    };

    let initial: Vec<i64> = (0..n as i64).collect();
    let mut best_labels = initial.clone();
    let mut best_iteration = 0;
    let mut best_ami = if cfg.iterations == 0 {
        score(&initial)?
    } else {
        None
    };
    let mut records = Vec::with_capacity(cfg.iterations);
    let mut iteration_labels = Vec::with_capacity(cfg.iterations);
    let mut early_exit = None;

    for it in 1..=cfg.iterations {
        let first = clock.time(format!("iter{it}/cluster"), || match mode {
            RunMode::Viewpoint => first_period(&features, &partition, cfg),
            RunMode::Global => global_period(&features, viewpoint_of.clone(), cfg),
        })?;
        let noise_before = first.state.noise_count();
        let first_clusters = first.state.cluster_count();
        let (selected, stats) = clock.time(format!("iter{it}/noise"), || {
            Ok(if cfg.noise_selection {
                noise_select(&first.state, &first.groups, cfg.k_tilde)
            } else {
                noise_to_singletons(&first.state)
            })
        })?;
        let (state, merges) = match tau {
            Some(t) => {
                let out = clock.time(format!("iter{it}/merge"), || {
                    second_period(&selected, &features, t.value)
                })?;
                (out.state, out.merges)
            }
            None => (selected.compact(), 0),
        };

        features = clock.time(format!("iter{it}/refine"), || {
            let mut f = features.clone();
            for _ in 0..cfg.refine_passes {
                let memory = FeatureMemory::from_centroids(&f, &state, cfg.beta)?;
                f = refine_features(&f, &state, &memory, cfg.refine_rate)?;
            }
            Ok(f)
        })?;

        let clusters = state.cluster_count();
        let labels = state.into_labels();
        let it_ami = score(&labels)?;
        info!(
            "iteration {it}: {first_clusters} first-period clusters, {noise_before} noise, \
             {merges} merges, {clusters} clusters, ami {it_ami:?}"
        );
        let improves = match (it_ami, best_ami) {
            (Some(a), Some(b)) => a > b,
            (Some(_), None) => true,
            (None, _) => true,
        };
        if improves {
            best_ami = it_ami;
            best_iteration = it;
            best_labels = labels.clone();
        }
        records.push(IterationRecord {
            iteration: it,
            first_period_clusters: first_clusters,
            noise_before_selection: noise_before,
            noise_selection: stats,
            merges,
            clusters,
            ami: it_ami,
        });
        iteration_labels.push(labels);
        if clusters == 1 && it < cfg.iterations {
            let reason = format!("all samples merged into one cluster at iteration {it}");
            warn!("{reason}; stopping");
            early_exit = Some(reason);
            break;
        }
    }

    let final_ami = match records.last() {
        Some(r) => r.ami,
        None => best_ami,
    };
    let manifest = RunManifest {
        mode,
        config: cfg.clone(),
        train_samples: n,
        viewpoints: partition.keys().copied().collect(),
        recognition_losses: recognition.epoch_losses,
        tau,
        iterations: records,
        early_exit,
        best_iteration,
        final_ami,
        best: MetricsReport {
            iteration: best_iteration,
            ami: best_ami,
            retrieval: None,
        },
    };
    Ok(RunOutput {
        manifest,
        train_indices: train,
        iteration_labels,
        best_labels,
        features,
        timings: clock.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub error_rate: f64,
    pub flipped: usize,
    pub final_ami: Option<f64>,
    pub best_ami: Option<f64>,
    pub clusters: usize,
}

/// Runs the viewpoint pipeline once per error rate, corrupting train
/// viewpoint labels with `seed`.
pub fn sweep_viewpoint_error(
    dataset: &Dataset,
    cfg: &PipelineConfig,
    rates: &[f64],
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    rates
        .iter()
        .map(|&rate| {
            let meta = inject_viewpoint_errors(&dataset.meta, rate, seed)?;
            let flipped = meta
                .iter()
                .zip(&dataset.meta)
                .filter(|(a, b)| a.viewpoint != b.viewpoint)
                .count();
            let corrupted = Dataset::new(dataset.embeddings.clone(), meta)?;
            let out = run_pipeline(&corrupted, cfg)?;
            info!("error rate {rate}: final ami {:?}", out.final_ami());
            Ok(SweepPoint {
                error_rate: rate,
                flipped,
                final_ami: out.manifest.final_ami,
                best_ami: out.manifest.best.ami,
                clusters: out
                    .manifest
                    .iterations
                    .last()
                    .map_or(out.train_indices.len(), |r| r.clusters),
            })
        })
        .collect()
}
