//! `sigmdn` — batch frontend for dataset generation, MDN training, pricing
//! and evaluation.
//!
//! Exit codes: 0 success, 2 config error, 3 data-format error, 4 numeric
//! failure. `SIGMDN_SEED` overrides config/flag seeds, `SIGMDN_THREADS` caps
//! the worker pool.

mod commands;
mod config;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sigmdn_core::pricing::OptionKind;
use sigmdn_core::Error;

#[derive(Parser)]
#[command(name = "sigmdn", version, about = "Mixture-density-network basket option pricing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a training dataset (binary records + JSON manifest).
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a mixture density network on a generated dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch history CSV (default: <out>.history.csv).
        #[arg(long)]
        history: Option<PathBuf>,
        /// Write a resumable trainer checkpoint here.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Continue a previous run from its checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Price European basket options with a trained model (closed form).
    Price {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        /// start:end:count or a comma-separated list (gross-return units).
        #[arg(long, default_value = "0.8:1.2:21")]
        strikes: String,
        #[arg(long, value_parser = parse_kind)]
        kind: OptionKind,
        /// Write the CSV table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a trained model against fresh Monte Carlo on one scenario.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        mc_paths: usize,
        #[arg(long)]
        seed: u64,
        /// Report files are written as <prefix>.report.json / <prefix>.prices.csv.
        #[arg(long, default_value = "evaluation")]
        out_prefix: String,
    },
}

fn parse_kind(s: &str) -> Result<OptionKind, String> {
    match s {
        "call" => Ok(OptionKind::Call),
        "put" => Ok(OptionKind::Put),
        other => Err(format!("bad option kind {other:?}; use call or put")),
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidInput(_) => 2,
        Error::Format(_) => 3,
        Error::Numeric(_) | Error::Training { .. } => 4,
        Error::Io(_) => 1,
    }
}

fn run(cli: Cli) -> sigmdn_core::Result<()> {
    match cli.command {
        Command::GenData { config, out, seed } => commands::gen_data(&config, &out, seed),
        Command::Train { config, data, out, history, checkpoint, resume } => {
            commands::train_command(commands::TrainArgs {
                config_path: &config,
                data_path: &data,
                out: &out,
                history: history.as_deref(),
                checkpoint: checkpoint.as_deref(),
                resume_from: resume.as_deref(),
            })
        }
        Command::Price { model, scenario, strikes, kind, out } => {
            commands::price_command(commands::PriceArgs {
                model_path: &model,
                scenario_path: &scenario,
                strikes: &strikes,
                kind,
                out: out.as_deref(),
            })
        }
        Command::Evaluate { model, scenario, mc_paths, seed, out_prefix } => {
            let seed = commands::effective_seed(Some(seed), 0);
            commands::evaluate_command(commands::EvaluateArgs {
                model_path: &model,
                scenario_path: &scenario,
                mc_paths,
                seed,
                out_prefix: &out_prefix,
            })
        }
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("SIGMDN_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
