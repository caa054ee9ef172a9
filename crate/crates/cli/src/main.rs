//! `fog`: theorem checks, sampling simulations, training runs and ablations.
//!
//! Exit status is 0 on success, 1 when a verification fails or a run errors,
//! and 2 for usage and configuration errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "fog", version, about = "Decayed replay and critic growth experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ConfigArg {
    /// TOML configuration file; omitted keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check both sampling theorems analytically and by Monte Carlo.
    VerifyTheorems {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        seeds: Option<u32>,
        #[arg(long)]
        beta: Option<u64>,
        #[arg(long)]
        root_seed: Option<u64>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Swap in a deliberately biased sampler to exercise the failure path.
        #[arg(long, hide = true)]
        corrupt_sampler: bool,
    },
    /// Per-transition sample counts under uniform and decayed sampling.
    SimulateSampling {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        beta: Option<u64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        seeds: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one agent and write its artifacts.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every env x sampler x expansion-mode x seed combination.
    Ablate {
        #[command(flatten)]
        config: ConfigArg,
        /// Number of seeds, starting at 0; overrides the config's seed list.
        #[arg(long)]
        seeds: Option<u64>,
        /// Comma-separated environment names.
        #[arg(long, value_delimiter = ',')]
        envs: Option<Vec<String>>,
        /// Comma-separated sampler kinds: uniform, decay, per.
        #[arg(long, value_delimiter = ',')]
        samplers: Option<Vec<String>>,
        /// Comma-separated expansion modes: on, off, fixed-2, fixed-4.
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<String>>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Critic loss per insertion bucket for a finished run directory.
    Heatmap {
        /// Directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        bucket: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli.command) {
        Ok(status) => status,
        Err(err) => {
            eprintln!("error: {err:#}");
            err.exit_code()
        }
    }
}
