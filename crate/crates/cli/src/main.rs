//! `metaembed`: build and evaluate meta-embeddings from source vector files.
//!
//! Exit status is 0 on success, 2 for invalid input or arguments and 3 for
//! numerical failures (non-convergence, non-finite loss).

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub const DEFAULT_SEED: u64 = 1234;

#[derive(Parser, Debug)]
#[command(name = "metaembed", version, about = "Combine and evaluate sentence embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Concatenate aligned vector tables.
    Combine(CombineArgs),
    /// Fit an SVD or GCCA combiner on aligned vector tables.
    Fit(FitArgs),
    /// Apply a fitted SVD or GCCA combiner.
    Apply(ApplyArgs),
    /// Train a DME or CDME combiner on a labeled pair dataset.
    Train(TrainArgs),
    /// Score vectors (or a combiner) on a pair task.
    Eval(EvalArgs),
    /// Describe a table or model file.
    Info(InfoArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineMethod {
    Con,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Svd,
    Gcca,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Dme,
    Cdme,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Sts,
    SickR,
    SickE,
    Nli,
    Paraphrase,
}

#[derive(Args, Debug, Serialize)]
pub struct CombineArgs {
    #[arg(long, value_enum, default_value = "con")]
    pub method: CombineMethod,
    /// Vector table; repeat for each source.
    #[arg(long, required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub method: FitMethod,
    #[arg(long, required = true)]
    pub inputs: Vec<PathBuf>,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Output dimensionality (SVD: min(3072, width, rows); GCCA: smallest view dimension).
    #[arg(long)]
    pub d: Option<usize>,
    /// GCCA shrinkage strength.
    #[arg(long, default_value_t = metaembed::ensemble::DEFAULT_TAU)]
    pub tau: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct ApplyArgs {
    /// Model written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub mode: TrainMode,
    /// Sequence or vector table; repeat for each source.
    #[arg(long, required = true)]
    pub inputs: Vec<PathBuf>,
    /// Class-labeled pair TSV or an official SICK file.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Model file to write; the loss history goes to `<out>.loss.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long = "d-prime", default_value_t = metaembed::dynamic::DEFAULT_D_PRIME)]
    pub d_prime: usize,
    /// Attention BiLSTM hidden size (CDME).
    #[arg(long, default_value_t = metaembed::dynamic::DEFAULT_ATTENTION_HIDDEN)]
    pub m: usize,
    /// Sentence encoder hidden size.
    #[arg(long = "m-enc", default_value_t = metaembed::dynamic::DEFAULT_ENCODER_HIDDEN)]
    pub m_enc: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    /// A vector table, or with --model the tables the model consumes.
    #[arg(long, required = true)]
    pub inputs: Vec<PathBuf>,
    /// Fitted SVD/GCCA model or trained DME/CDME model applied to the inputs first.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "report.jsonl")]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 5)]
    pub tenacity: usize,
    #[arg(long = "epoch-size", default_value_t = 4)]
    pub epoch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Probe hidden units (0 = logistic regression).
    #[arg(long, default_value_t = 0)]
    pub nhid: usize,
    /// For sick-r: score range-scaled cosines instead of training the probe.
    #[arg(long)]
    pub cosine: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct InfoArgs {
    pub path: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = std::panic::catch_unwind(|| commands::run(cli.command));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(failure)) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
        Err(_) => {
            eprintln!("error: internal failure while processing the inputs");
            ExitCode::from(2)
        }
    }
}
