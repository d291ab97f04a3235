//! `qbara`: quantize weights, fine-tune adapters on synthetic tasks, merge,
//! verify gradients and inspect checkpoints.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or configuration error,
//! 3 numeric or verification failure.

mod commands;
mod config;
mod failure;
mod geometry;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

use config::Settings;
use failure::Outcome;

#[derive(Parser, Debug)]
#[command(
    name = "qbara",
    version,
    about = "Block-wise quantization with balanced-rank adapters"
)]
struct Cli {
    /// File of `key = value` lines supplying defaults for the subcommand's options
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Quantize a raw f64 matrix into a .qmz file
    Quantize(QuantizeArgs),
    /// Fine-tune adapters on a quantized student of a synthetic task
    Train(TrainArgs),
    /// Merge adapters into dense weights or into the quantization offsets
    Merge(MergeArgs),
    /// Train one balanced-rank student per balancing factor
    Sweep(SweepArgs),
    /// Compare backprop against central finite differences
    Gradcheck(GradcheckArgs),
    /// Describe a checkpoint or a geometry file
    Inspect(InspectArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Quantize(_) => "quantize",
            Command::Train(_) => "train",
            Command::Merge(_) => "merge",
            Command::Sweep(_) => "sweep",
            Command::Gradcheck(_) => "gradcheck",
            Command::Inspect(_) => "inspect",
        }
    }
}

#[derive(Args, Debug, Default)]
pub struct QuantArgs {
    /// Bits per code: 2, 3, 4 or 8 [default: 4]
    #[arg(long)]
    pub bits: Option<u8>,
    /// Tile shape as RxC, or a single side for square tiles [default: 8x8]
    #[arg(long)]
    pub tile: Option<String>,
    /// minmax or absmax [default: minmax]
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Args, Debug)]
pub struct QuantizeArgs {
    /// Raw matrix: rows u32, cols u32, then f64 row-major (little-endian)
    #[arg(long = "in", value_name = "FILE")]
    pub input: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub quant: QuantArgs,
}

#[derive(Args, Debug, Default)]
pub struct TaskArgs {
    /// teacher-student or classification [default: teacher-student]
    #[arg(long)]
    pub task: Option<String>,
    /// Comma-separated layer widths [default: 64,64,32]
    #[arg(long)]
    pub widths: Option<String>,
    /// relu, tanh or identity [default: relu]
    #[arg(long)]
    pub activation: Option<String>,
    /// Latent dimension of the inputs, 0 for iid features [default: 8]
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Standard deviation of the noise added to latent inputs [default: 0.1]
    #[arg(long)]
    pub input_noise: Option<f64>,
    /// Size of the fixed evaluation set [default: 512]
    #[arg(long)]
    pub eval_samples: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct OptimArgs {
    #[arg(long)]
    pub steps: Option<usize>,
    /// Seed for the task, initialization and batches [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// adam or sgd [default: adam]
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Learning rate [default: 1e-3]
    #[arg(long)]
    pub lr: Option<f64>,
    /// [default: 32]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adapter scaling numerator, s = lora_alpha / rank [default: 16]
    #[arg(long)]
    pub lora_alpha: Option<f64>,
    /// pool, truncate or stride [default: pool]
    #[arg(long)]
    pub operator: Option<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// none, lora, bara or hira [default: bara]
    #[arg(long)]
    pub adapter: Option<String>,
    /// Balancing factor λ or λ₁xλ₂ [default: 2; hira: the tile shape]
    #[arg(long)]
    pub lambda: Option<String>,
    /// Adapter rank r or r′ [default: 8]
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// CSV of step,train_loss,eval_loss
    #[arg(long, value_name = "FILE")]
    pub history: Option<PathBuf>,
    #[command(flatten)]
    pub task: TaskArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub quant: QuantArgs,
}

#[derive(Args, Debug)]
pub struct MergeArgs {
    #[arg(long, value_name = "FILE")]
    pub ckpt: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// bara-dense (full-precision weights) or hira-beta (offsets only)
    #[arg(long)]
    pub mode: Option<String>,
    /// Seed for the probe inputs [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Comma-separated balancing factors, each λ or λ₁xλ₂ [default: 1,2,4,8]
    #[arg(long)]
    pub lambdas: Option<String>,
    /// r_base; each run uses r′ = r_base·λ [default: 4]
    #[arg(long)]
    pub rank_base: Option<usize>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub task: TaskArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub quant: QuantArgs,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// lora, bara or hira [default: bara]
    #[arg(long)]
    pub adapter: Option<String>,
    /// pool, truncate or stride [default: pool]
    #[arg(long)]
    pub operator: Option<String>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long, value_name = "FILE", conflicts_with = "geometry")]
    pub ckpt: Option<PathBuf>,
    /// Layer-geometry description instead of a checkpoint
    #[arg(long, value_name = "FILE")]
    pub geometry: Option<PathBuf>,
    /// Raw matrix of probe inputs for the magnitude report
    #[arg(long, value_name = "FILE", requires = "csv")]
    pub magnitudes: Option<PathBuf>,
    /// Where to write the magnitude report
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

/// Long option names accepted by `subcommand`, which double as config keys.
fn option_names(subcommand: &str) -> Vec<String> {
    Cli::command()
        .find_subcommand(subcommand)
        .map(|c| {
            c.get_arguments()
                .filter_map(|a| a.get_long())
                .filter(|l| !matches!(*l, "config" | "help"))
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default()
}

fn run(cli: Cli) -> Outcome {
    let settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let names = option_names(cli.command.name());
    settings.check_keys(names.iter().map(String::as_str))?;
    match cli.command {
        Command::Quantize(a) => commands::quantize(a, &settings),
        Command::Train(a) => commands::train(a, &settings),
        Command::Merge(a) => commands::merge(a, &settings),
        Command::Sweep(a) => commands::sweep(a, &settings),
        Command::Gradcheck(a) => commands::gradcheck(a, &settings),
        Command::Inspect(a) => commands::inspect(a, &settings),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(failure::USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
