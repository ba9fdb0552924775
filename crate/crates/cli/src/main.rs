//! `skelnet`: train, evaluate and ablate skeletal motion predictors.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use skelnet_core::{ErrorKind, Result};

use settings::RunConfig;

#[derive(Parser)]
#[command(name = "skelnet", version, about = "Skeletal motion prediction: SkelNet, C-RNN and Skel-TNet")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model, or the staged Skel-TNet pipeline.
    Train(TrainArgs),
    /// Evaluate checkpoints on the fixed test windows.
    Eval(EvalArgs),
    /// Train and evaluate a list of variants over several seeds.
    Ablate(AblateArgs),
    /// Print closed-form and instantiated parameter counts.
    Paramcount(ParamcountArgs),
    /// Write a synthetic dataset directory.
    GenSynthetic(GenArgs),
    /// Convert a comma-separated exponential-map export into a sequence file.
    Convert(ConvertArgs),
}

#[derive(Args)]
struct Common {
    /// key = value config file with [common] and per-command sections; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed.
    #[arg(long, default_value = "0")]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker thread cap (0: all cores). Results do not depend on it.
    #[arg(long, default_value = "0")]
    threads: usize,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset root: <root>/<activity>/<train|test>/<name>.seq, skeleton at <root>/skeleton.skel.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Generate the synthetic dataset in-process instead of reading --data.
    #[arg(long)]
    synthetic: bool,
    /// Skeleton description (defaults to the dataset's or the built-in synthetic one).
    #[arg(long)]
    skeleton: Option<PathBuf>,
    /// Standard deviation below which a training dimension counts as still.
    #[arg(long, default_value = "1e-4")]
    still_threshold: f64,
    #[arg(long, default_value = "10")]
    synthetic_count: usize,
    #[arg(long, default_value = "200")]
    synthetic_length: usize,
    #[arg(long, default_value = "0")]
    synthetic_seed: u64,
    /// Cross-group coupling of the synthetic oscillators, in [0, 1].
    #[arg(long, default_value = "0")]
    synthetic_coupling: f64,
}

#[derive(Args)]
struct ModelArgs {
    /// Partition scheme of SkelNet branches.
    #[arg(long, default_value = "five_part", value_parser = ["five_part", "lr_three", "ud_three", "whole"])]
    scheme: String,
    /// Hidden widths of each SkelNet branch.
    #[arg(long, default_value = "64,128,64")]
    branch_dims: String,
    #[arg(long, default_value = "lrelu", value_parser = ["lrelu", "tanh", "none"])]
    activation: String,
    #[arg(long, default_value = "0.2")]
    dropout: f64,
    #[arg(long, default_value = "true", action = clap::ArgAction::Set)]
    residual: bool,
    /// Put global joints the skeleton leaves ungrouped into the torso branch.
    #[arg(long, default_value = "true", action = clap::ArgAction::Set)]
    global_in_torso: bool,
    /// Consecutive seed frames SkelNet reads per prediction.
    #[arg(long, default_value = "1")]
    seed_length: usize,
    #[arg(long, default_value = "1024")]
    gru_units: usize,
    /// Hidden widths of the C-RNN output head.
    #[arg(long, default_value = "512")]
    crnn_head: String,
    /// Hidden widths of the merging network.
    #[arg(long, default_value = "1024,512,512")]
    merge_dims: String,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model_args: ModelArgs,
    /// baseline is a single-branch (whole-scheme) SkelNet.
    #[arg(long, default_value = "skelnet", value_parser = ["skelnet", "crnn", "skeltnet", "baseline"])]
    model: String,
    /// Loss of a single-model run (default: sampling for SkelNet, converging for C-RNN).
    #[arg(long, value_parser = ["sampling", "converging"])]
    loss: Option<String>,
    #[arg(long, default_value = "1.0")]
    alpha: f64,
    #[arg(long, default_value = "0.1")]
    beta: f64,
    /// Training horizon (default: 400 for skeltnet, 1000 otherwise).
    #[arg(long)]
    horizon_ms: Option<f64>,
    /// Seed frames per training window (default: max(seed-length, 4) when a C-RNN is trained).
    #[arg(long)]
    seed_frames: Option<usize>,
    #[arg(long, default_value = "10000")]
    iterations: usize,
    #[arg(long, default_value = "16")]
    batch_size: usize,
    /// Learning rate of a single-model run (default: 0.01 SkelNet, 5e-5 C-RNN).
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_parser = ["sgd", "adam"])]
    optimizer: Option<String>,
    #[arg(long, default_value = "0.01")]
    skelnet_lr: f64,
    #[arg(long, default_value = "5e-5")]
    crnn_lr: f64,
    #[arg(long, default_value = "0.01")]
    merge_lr: f64,
    /// Merge wiring of a skeltnet run.
    #[arg(long, default_value = "network")]
    merge_mode: String,
    /// Gaussian noise variance added to network inputs.
    #[arg(long, default_value = "0")]
    noise_variance: f64,
    #[arg(long, default_value = "standardized", value_parser = ["standardized", "raw"])]
    noise_space: String,
    /// Global gradient-norm cap (0 disables).
    #[arg(long, default_value = "5")]
    clip_norm: f64,
    /// Intermediate checkpoint interval (0: final checkpoint only).
    #[arg(long, default_value = "0")]
    checkpoint_every: usize,
    /// Record wall time in logs (makes logs run-dependent).
    #[arg(long)]
    wall_time: bool,
}

#[derive(Args)]
struct EvalOpts {
    #[arg(long, default_value = "8")]
    windows: usize,
    #[arg(long, default_value = "1234567890")]
    sampler_seed: u64,
    /// Per-horizon report points in ms.
    #[arg(long, default_value = "80,160,240,320,400")]
    horizons_ms: String,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    eval: EvalOpts,
    /// Checkpoint files: one SkelNet or C-RNN, or SkelNet + C-RNN (+ merge) for the pipeline.
    #[arg(long)]
    checkpoint: Option<String>,
    /// Pipeline wiring: network, average, passthrough_skel, passthrough_crnn, single_skel, single_crnn.
    #[arg(long)]
    merge_mode: Option<String>,
    /// MoF horizon (default: the training horizon stored in the checkpoint).
    #[arg(long)]
    horizon_ms: Option<f64>,
    #[arg(long)]
    seed_frames: Option<usize>,
    /// Expected SkelNet partition; a checkpoint trained with another one is rejected.
    #[arg(long, value_parser = ["five_part", "lr_three", "ud_three", "whole"])]
    scheme: Option<String>,
    /// Add a per-group error breakdown for this scheme.
    #[arg(long, value_parser = ["five_part", "lr_three", "ud_three", "whole"])]
    group_scheme: Option<String>,
    #[arg(long, default_value = "0")]
    noise_variance: f64,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    eval: EvalOpts,
    /// Variants: full, wo_branches, wo_lrelu, wo_dropout, wo_residual, w_tanh, w_long_prior, ud, lr,
    /// crnn_converging, crnn_sampling.
    #[arg(long, default_value = "full,wo_branches")]
    variants: String,
    #[arg(long, default_value = "0,1,2,3,4")]
    seeds: String,
    /// One table column per variance; noise applies in training and testing.
    #[arg(long, default_value = "0")]
    noise_variance: String,
    #[arg(long, default_value = "200")]
    iterations: usize,
    #[arg(long, default_value = "16")]
    batch_size: usize,
    #[arg(long, default_value = "400")]
    horizon_ms: f64,
    #[arg(long, default_value = "0.01")]
    skelnet_lr: f64,
    #[arg(long, default_value = "0.01")]
    crnn_lr: f64,
    #[arg(long, default_value = "64,128,64")]
    branch_dims: String,
    #[arg(long, default_value = "64")]
    gru_units: usize,
    #[arg(long, default_value = "64")]
    crnn_head: String,
    #[arg(long, default_value = "3")]
    long_prior: usize,
    #[arg(long, default_value = "4")]
    crnn_seed_frames: usize,
}

#[derive(Args)]
struct ParamcountArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model_args: ModelArgs,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct ConvertArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated text, one frame per line, no header.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    activity: Option<String>,
    /// Frame period of the output after downsampling.
    #[arg(long, default_value = "40")]
    period_ms: f64,
    /// Keep every n-th frame.
    #[arg(long, default_value = "1")]
    downsample: usize,
    /// Validate the width against this skeleton.
    #[arg(long)]
    skeleton: Option<PathBuf>,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
        ErrorKind::Io => 5,
    }
}

fn run() -> Result<()> {
    let command = Cli::command();
    let matches = command.clone().get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let spec = command.find_subcommand(name).expect("matched subcommand exists");
    let rc = RunConfig::resolve(name, spec, sub)?;
    skelnet_core::parallel::set_default_threads(rc.get("threads")?);
    match cli.command {
        Command::Train(_) => commands::train(&rc),
        Command::Eval(_) => commands::eval(&rc),
        Command::Ablate(_) => commands::ablate(&rc),
        Command::Paramcount(_) => commands::paramcount(&rc),
        Command::GenSynthetic(_) => commands::gen_synthetic(&rc),
        Command::Convert(_) => commands::convert(&rc),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
