//! `vcs`: command-line front end for the value-aided conditional learning lab.

mod commands;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use vcs_core::Error;

#[derive(Parser)]
#[command(
    name = "vcs",
    version,
    about = "Value-aided conditional supervised learning on toy offline RL tasks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum QualityArg {
    Expert,
    Medium,
    Mixture,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate an offline dataset.
    GenData {
        #[arg(long)]
        env: String,
        #[arg(long, value_enum, default_value = "expert")]
        quality: QualityArg,
        #[arg(long, default_value_t = 50)]
        n_traj: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the twin critics and state value by expectile regression.
    TrainValue {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a conditioned policy against a frozen critic.
    TrainPolicy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        critic: PathBuf,
        /// vcs, rcsl_only, q_greedy or constant_w_<c>
        #[arg(long, default_value = "vcs")]
        baseline: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate policy checkpoints; one --policy directory per training seed.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "policy", required = true)]
        policies: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Offline mean row ratio of a critic.
    Omrr {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        critic: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Q and normalized-kernel profile over the action grid at the densest state cell.
    Profile {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        critic: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Average in-sample action spread of a dataset.
    Spread {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full stitching reproduction on the grid dataset.
    StitchDemo {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
}

/// 2 config, 3 divergence, 4 IO and file format, 1 anything else.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidSpec(_) | Error::UnknownEnv(_) | Error::Json(_) => 2,
        Error::Divergence { .. } => 3,
        Error::Io(_)
        | Error::BadMagic { .. }
        | Error::UnsupportedVersion { .. }
        | Error::Truncated(_)
        | Error::Malformed(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
