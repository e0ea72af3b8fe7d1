use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use vapc::dataset::{Split, Viewpoint};
use vapc::eval::{ami, evaluate_retrieval, MetricsReport, RetrievalProtocol, DEFAULT_CMC_RANKS};
use vapc::io::{load_dataset, read_labels, write_embeddings, write_json, write_meta};
use vapc::pipeline::{run, sweep_viewpoint_error, RunMode};
use vapc::synth::{generate, inject_viewpoint_errors, SynthConfig};
use vapc::{AmiNormalizer, Error, PipelineConfig, Result, TiRank};

#[derive(Parser)]
#[command(
    name = "vapc",
    version,
    about = "Viewpoint-aware progressive clustering of re-identification embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the viewpoint-aware pipeline and write labels plus a manifest.
    Run(RunArgs),
    /// Run the same loop on all samples at once, without viewpoint merging.
    Baseline(RunArgs),
    /// Rerun the pipeline with a fraction of train viewpoints corrupted.
    SweepViewpointError(SweepArgs),
    /// Retrieval metrics on the query/gallery splits, and AMI of a label file.
    Eval(EvalArgs),
    /// Write a synthetic dataset.
    Gen(GenArgs),
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    k_tilde: usize,
    /// Rank of the cross-viewpoint pair distance used as merge threshold.
    #[arg(long, default_value_t = 1200, conflicts_with = "ti_quantile")]
    ti: usize,
    /// Threshold rank as a fraction of all cross-viewpoint pairs.
    #[arg(long)]
    ti_quantile: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    #[arg(long, default_value_t = 0.35)]
    eps: f64,
    #[arg(long, default_value_t = 4)]
    min_pts: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 0.002)]
    recognition_rate: f64,
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    #[arg(long, default_value_t = 0.5)]
    refine_rate: f64,
    #[arg(long, default_value_t = 1)]
    refine_passes: usize,
    /// Turn leftover density noise straight into singletons.
    #[arg(long)]
    no_noise_selection: bool,
    #[arg(long, value_enum, default_value = "arithmetic")]
    ami_normalizer: Normalizer,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Normalizer {
    Arithmetic,
    Max,
}

impl From<Normalizer> for AmiNormalizer {
    fn from(n: Normalizer) -> Self {
        match n {
            Normalizer::Arithmetic => AmiNormalizer::Arithmetic,
            Normalizer::Max => AmiNormalizer::Max,
        }
    }
}

impl PipelineArgs {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            k: self.k,
            k_tilde: self.k_tilde,
            ti: match self.ti_quantile {
                Some(q) => TiRank::Quantile(q),
                None => TiRank::Rank(self.ti),
            },
            beta: self.beta,
            eps: self.eps,
            min_pts: self.min_pts,
            recognition_epochs: self.epochs,
            recognition_rate: self.recognition_rate,
            iterations: self.iterations,
            refine_rate: self.refine_rate,
            refine_passes: self.refine_passes,
            noise_selection: !self.no_noise_selection,
            seed: self.seed,
            ami_normalizer: self.ami_normalizer.into(),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Comma-separated error rates.
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.3,0.5")]
    rates: Vec<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "cross_camera")]
    protocol: Protocol,
    /// Label file to score against ground-truth ids.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "arithmetic")]
    ami_normalizer: Normalizer,
}

#[derive(Clone, Copy, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
enum Protocol {
    CrossCamera,
    AllGallery,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "data")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 50)]
    identities: usize,
    /// Comma-separated viewpoint names.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "front,front_side,side,rear_side,rear"
    )]
    viewpoints: Vec<String>,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 10)]
    samples: usize,
    #[arg(long)]
    identity_spread: Option<f64>,
    #[arg(long)]
    viewpoint_scale: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, default_value_t = 20)]
    cameras: usize,
    #[arg(long, default_value_t = 0)]
    test_identities: usize,
    /// Fraction of train viewpoint labels to corrupt.
    #[arg(long, default_value_t = 0.0)]
    error_rate: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Serialize)]
struct EvalReport {
    protocol: RetrievalProtocol,
    metrics: MetricsReport,
}

fn cmd_run(args: &RunArgs, mode: RunMode) -> Result<()> {
    let dataset = load_dataset(&args.data.embeddings, &args.data.meta)?;
    let out = run(&dataset, &args.pipeline.config(), mode)?;
    out.persist(&args.data.out_dir)?;
    let summary = serde_json::json!({
        "mode": out.manifest.mode,
        "iterations": out.manifest.iterations.len(),
        "tau": out.manifest.tau.map(|t| t.value),
        "best_iteration": out.manifest.best_iteration,
        "final_ami": out.manifest.final_ami,
        "out_dir": args.data.out_dir,
    });
    println!("{summary}");
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let dataset = load_dataset(&args.data.embeddings, &args.data.meta)?;
    let cfg = args.pipeline.config();
    let points = sweep_viewpoint_error(&dataset, &cfg, &args.rates, cfg.seed)?;
    write_json(args.data.out_dir.join("sweep.json"), &points)?;
    println!("{}", serde_json::to_string(&points)?);
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let dataset = load_dataset(&args.data.embeddings, &args.data.meta)?;
    let protocol = match args.protocol {
        Protocol::CrossCamera => RetrievalProtocol::CrossCamera,
        Protocol::AllGallery => RetrievalProtocol::AllGallery,
    };
    let mut metrics = MetricsReport::default();

    let queries = dataset.indices_of(Split::Query);
    let gallery = dataset.indices_of(Split::Gallery);
    if !queries.is_empty() && !gallery.is_empty() {
        let pick = |idx: &[usize]| {
            idx.iter()
                .map(|&i| dataset.meta[i].clone())
                .collect::<Vec<_>>()
        };
        metrics.retrieval = Some(evaluate_retrieval(
            &dataset.embeddings.select(&queries),
            &pick(&queries),
            &dataset.embeddings.select(&gallery),
            &pick(&gallery),
            protocol,
            &DEFAULT_CMC_RANKS,
        )?);
    } else {
        info!("no query/gallery split; retrieval metrics skipped");
    }

    if let Some(path) = &args.labels {
        let rows = read_labels(path)?;
        let mut predicted = Vec::with_capacity(rows.len());
        let mut truth = Vec::with_capacity(rows.len());
        for (line, row) in rows.iter().enumerate() {
            let id = dataset
                .meta
                .get(row.index)
                .and_then(|m| m.gt_id.clone())
                .ok_or_else(|| Error::Parse {
                    line: line + 2,
                    message: format!("sample {} has no ground-truth id", row.index),
                })?;
            predicted.push(row.label);
            truth.push(id);
        }
        metrics.iteration = rows.first().map_or(0, |r| r.iteration);
        metrics.ami = Some(ami(&predicted, &truth, args.ami_normalizer.into())?);
    }

    let report = EvalReport { protocol, metrics };
    write_json(args.data.out_dir.join("report.json"), &report)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let defaults = SynthConfig::default();
    let viewpoints = args
        .viewpoints
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.parse::<Viewpoint>().map_err(|_| Error::UnknownViewpoint {
                line: i + 1,
                value: v.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = SynthConfig {
        identities: args.identities,
        viewpoints,
        dim: args.dim,
        identity_spread: args.identity_spread.unwrap_or(defaults.identity_spread),
        viewpoint_offset_scale: args
            .viewpoint_scale
            .unwrap_or(defaults.viewpoint_offset_scale),
        within_cluster_noise: args.noise.unwrap_or(defaults.within_cluster_noise),
        samples_per_identity_viewpoint: args.samples,
        cameras: args.cameras,
        test_identities: args.test_identities,
        seed: args.seed,
    };
    let data = generate(&cfg)?;
    let meta = inject_viewpoint_errors(&data.meta, args.error_rate, args.seed)?;
    let dir: &Path = &args.out_dir;
    write_embeddings(dir.join("embeddings.bin"), &data.embeddings)?;
    write_meta(dir.join("meta.jsonl"), &meta)?;
    write_json(dir.join("synth.json"), &cfg)?;
    println!(
        "{}",
        serde_json::json!({ "samples": meta.len(), "dim": cfg.dim, "out_dir": dir })
    );
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err.category() {
        "config" => 2,
        "input" => 3,
        "validation" => 4,
        "format" => 5,
        _ => 6,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args, RunMode::Viewpoint),
        Command::Baseline(args) => cmd_run(args, RunMode::Global),
        Command::SweepViewpointError(args) => cmd_sweep(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gen(args) => cmd_gen(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let report = serde_json::json!({ "error": err.category(), "message": err.to_string() });
            eprintln!("{report}");
            ExitCode::from(exit_code(&err))
        }
    }
}
