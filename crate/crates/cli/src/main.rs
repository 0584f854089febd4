//! `shbmil`: generate synthetic cohorts, score center shift and run the MIL
//! classification benchmark from the command line.
//!
//! Exit status is 0 on success, 1 on a runtime or data failure and 2 on a
//! usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Debug, Parser)]
#[command(
    name = "shbmil",
    version,
    about = "MIL slide-classification benchmark with center-shift metrics"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for bag loading and cross-validation folds.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: u16,
    /// Output location (a directory for gen/bench/report, a file otherwise).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print machine-readable JSON on stdout instead of text.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic cohort (bag files plus manifest.csv).
    Gen(GenArgs),
    /// Center-shift score: silhouette of centers on a t-SNE of slide embeddings.
    Fmsi(FmsiArgs),
    /// Robustness index over k-NN neighborhoods of slide embeddings.
    Ri(RiArgs),
    /// Train ABMIL on a manifest and save a checkpoint.
    AbmilTrain(AbmilTrainArgs),
    /// Prototype classifier, on a train/test pair or by cross-validation.
    Simpleshot(SimpleShotArgs),
    /// Full benchmark: FM-SI, RI and cross-validated ABMIL and MI-SimpleShot.
    Bench(BenchArgs),
    /// Recompute the cross-encoder statistics of the bundled reference table.
    Paperstats,
    /// Aggregate several bench reports into cross-model statistics.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u32).range(1..))]
    pub classes: u32,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    pub centers: u32,
    /// Slides per (class, center) cell.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub per_cell: u32,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u32).range(1..))]
    pub dim: u32,
    /// Center bias: scale of the per-center offset added to every patch.
    #[arg(long, default_value_t = 0.0, value_parser = non_negative)]
    pub beta: f64,
    #[arg(long, default_value_t = 2.0, value_parser = non_negative)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub noise: f64,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u32).range(1..))]
    pub min_patches: u32,
    #[arg(long, default_value_t = 48, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_patches: u32,
    /// Use the 6 x 2 skin-cohort cell counts (621 slides) instead of --per-cell.
    #[arg(long)]
    pub cohort: bool,
}

#[derive(Debug, Args)]
pub struct TsneArgs {
    #[arg(long)]
    pub perplexity: Option<f64>,
    /// Gradient-descent iterations.
    #[arg(long)]
    pub tsne_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FmsiArgs {
    pub manifest: PathBuf,
    /// Comma-separated t-SNE seeds; the score is their mean.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[command(flatten)]
    pub tsne: TsneArgs,
    /// Write `slide_id,x,y,center,label` for the last seed's embedding.
    #[arg(long)]
    pub embedding_csv: Option<PathBuf>,
    /// Write the KL trace of the last seed.
    #[arg(long)]
    pub trace_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RiArgs {
    pub manifest: PathBuf,
    #[arg(long, short, default_value_t = 25)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub peak_lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AbmilTrainArgs {
    pub manifest: PathBuf,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Held-out manifest to report balanced accuracy on.
    #[arg(long)]
    pub eval: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimpleShotArgs {
    /// Training manifest (the whole cohort when cross-validating).
    pub manifest: PathBuf,
    /// Test manifest. Without it the command cross-validates on `manifest`.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(2..))]
    pub folds: u32,
    /// Subtract the training mean and L2-normalize before matching.
    #[arg(long)]
    pub center_l2: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    pub manifest: PathBuf,
    /// key=value config file; flags given here override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset name in the report (defaults to the manifest's parent directory).
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
    pub folds: Option<u32>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub fmsi_seeds: Option<Vec<u64>>,
    #[command(flatten)]
    pub tsne: TsneArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub center_l2: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON files written by `bench`, one per encoder.
    #[arg(required = true, num_args = 1..)]
    pub reports: Vec<PathBuf>,
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("{s:?} is not a finite value >= 0")),
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("{s:?} is not a finite value > 0")),
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SHBMIL_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version requests print to stdout and exit 0
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
