//! `core-reft` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 config error,
//! 3 verification failure. `CORE_REFT_THREADS` caps sweep parallelism.

mod commands;
mod config;
mod output;

pub use commands::{
    cmd_pretrain, cmd_run, cmd_sweep, cmd_verify, execute_run, layer_count_grid, spread_layers,
    RunArtifacts, SweepAxis,
};
pub use config::{
    load_dataset, DatasetSection, EncoderSection, ExperimentConfig, InterventionSection,
    LoadedData, Overrides,
};
pub use output::{
    alpha_group, layers_field, read_results_csv, write_matrix_csv, write_results_csv,
    write_summary_json, AlphaGroup, MatrixRow, ResultRow, RunSummary, SummaryFile,
    RESULTS_HEADER,
};

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CoreError;
use crate::verify::{Fault, VerifyOptions};

pub const EXIT_OK: u8 = 0;
pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(
    name = "core-reft",
    version,
    about = "Continual representation finetuning: low-rank edits on a frozen encoder"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides out_dir in the file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Single run seed (overrides the seeds list).
    #[arg(long)]
    seed: Option<u64>,
    /// Intervention rank (overrides intervention.rank).
    #[arg(long)]
    rank: Option<usize>,
    /// Intervened block indices, comma separated (overrides intervention.layers).
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    /// Single imbalance factor (overrides the alphas list).
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain the encoder and write a checkpoint.
    Pretrain {
        #[command(flatten)]
        args: RunArgs,
    },
    /// Run the continual-learning protocol per seed and alpha.
    Run {
        #[command(flatten)]
        args: RunArgs,
    },
    /// Run one cell per axis value (rank, layers, alpha, or seed).
    Sweep {
        #[command(flatten)]
        args: RunArgs,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// Axis values; defaults to the documented grid.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<String>>,
    },
    /// Run the property suites and write report.txt.
    Verify {
        /// Report directory (default: current directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Randomized draws per suite.
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        /// Deliberately break a property to prove the check bites
        /// (targets: gradcheck).
        #[arg(long)]
        inject_fault: Option<String>,
    },
}

fn load_config(args: &RunArgs) -> crate::Result<(ExperimentConfig, PathBuf)> {
    let mut config = ExperimentConfig::from_path(&args.config)?;
    config.apply_overrides(&Overrides {
        out: args.out.clone(),
        seed: args.seed,
        rank: args.rank,
        layers: args.layers.clone(),
        alpha: args.alpha,
    });
    config.validate()?;
    let dir = args
        .config
        .parent()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((config, dir))
}

fn exit_code_for(err: &CoreError) -> u8 {
    match err {
        CoreError::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Parse arguments and dispatch; returns the process exit code.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome: crate::Result<u8> = match &cli.command {
        Command::Pretrain { args } => {
            load_config(args).and_then(|(cfg, dir)| cmd_pretrain(&cfg, &dir).map(|()| EXIT_OK))
        }
        Command::Run { args } => {
            load_config(args).and_then(|(cfg, dir)| cmd_run(&cfg, &dir).map(|()| EXIT_OK))
        }
        Command::Sweep { args, axis, values } => load_config(args).and_then(|(cfg, dir)| {
            cmd_sweep(&cfg, &dir, *axis, values.clone()).map(|()| EXIT_OK)
        }),
        Command::Verify {
            out,
            draws,
            inject_fault,
        } => {
            let fault = match inject_fault.as_deref() {
                None => Ok(None),
                Some(text) => text
                    .parse::<Fault>()
                    .map(Some)
                    .map_err(CoreError::Config),
            };
            fault.and_then(|fault| {
                let opts = VerifyOptions {
                    draws: (*draws).max(1),
                    fault,
                    ..VerifyOptions::default()
                };
                let out = out.clone().unwrap_or_else(|| PathBuf::from("."));
                cmd_verify(&out, &opts).map(|ok| if ok { EXIT_OK } else { EXIT_VERIFY })
            })
        }
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
