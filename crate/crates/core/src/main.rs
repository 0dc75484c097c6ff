use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fusedrive::cli::{run, Command, RunArgs};
use fusedrive::fingerprint::to_sorted_json;
use fusedrive::parallel::Parallelism;

#[derive(Parser)]
#[command(
    name = "fusedrive",
    version,
    about = "Multimodal driving-action prediction with explanations"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset.
    GenData(Common),
    /// Split a dataset into train/val/test ids.
    Split(Common),
    /// Train a model and save the best and last checkpoints.
    Train(Common),
    /// Evaluate a checkpoint on a split.
    Eval(Common),
    /// Retrain the ablation variants and compare them.
    Ablate(Common),
    /// Predict and explain a single sample.
    Explain(Common),
    /// Compare analytic gradients with finite differences.
    GradCheck(Common),
    /// Collect tables and plots from earlier runs.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Run on one thread even when built with rayon.
    #[arg(long)]
    sequential: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::GenData(c) => (Command::GenData, c),
        Cmd::Split(c) => (Command::Split, c),
        Cmd::Train(c) => (Command::Train, c),
        Cmd::Eval(c) => (Command::Eval, c),
        Cmd::Ablate(c) => (Command::Ablate, c),
        Cmd::Explain(c) => (Command::Explain, c),
        Cmd::GradCheck(c) => (Command::GradCheck, c),
        Cmd::Report(c) => (Command::Report, c),
    };
    let args = RunArgs {
        config: common.config,
        seed: common.seed,
        out: common.out,
        par: if common.sequential {
            Parallelism::Sequential
        } else {
            Parallelism::auto()
        },
    };
    match run(command, &args) {
        Ok(manifest) => {
            if let Ok(s) = to_sorted_json(&manifest) {
                print!("{s}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
