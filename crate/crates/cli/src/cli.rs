use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "resflu", version, about = "Skeleton action recognition, bias audit and risk-aware flu support")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a dataset file.
    Train(TrainArgs),
    /// Evaluate a model per cohort and write a report.
    Eval(EvalArgs),
    /// Flu probability before and after the risk penalty.
    Diagnose(DiagnoseArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Write a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model artifact to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Defaults to the artifact path with a `.history.json` extension.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated attributes, e.g. `gender,pose,view`.
    #[arg(long)]
    pub cohorts: Option<String>,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub p_cough: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub p_sneeze: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub p_cough: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub p_sneeze: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, requires = "spec", conflicts_with = "report", allow_negative_numbers = true)]
    pub sens: Option<f64>,
    #[arg(long, requires = "sens", allow_negative_numbers = true)]
    pub spec: Option<f64>,
    /// Take sensitivity and specificity from a report's baseline.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Use this cohort of the report instead, e.g. `view=left`.
    #[arg(long, requires = "report")]
    pub cohort: Option<String>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub port: Option<i64>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of console assets served at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a test split holding out the first subjects.
    #[arg(long)]
    pub test_out: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub holdout_subjects: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 300)]
    pub samples_per_class: usize,
    #[arg(long, default_value_t = 64)]
    pub frames: usize,
    #[arg(long, default_value_t = 15)]
    pub subjects: usize,
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    /// Multiplier on the center-view noise.
    #[arg(long, default_value_t = 1.0)]
    pub center_mult: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}
