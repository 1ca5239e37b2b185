//! Batch entry point wiring the full pipeline: `synth`, `train`, `eval`,
//! `curve`.
//!
//! Exit codes: 0 success, 2 configuration/format errors, 3 I/O errors,
//! 4 numeric failures.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use evipitch::error::Error;
use evipitch::network::Task;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "evipitch", version, about = "Evidential melody estimation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic WAV + label corpus with a manifest.
    Synth {
        /// Synthetic-spec JSON file.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on the configured source corpus.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured task (M1, M2, R1, R2, beta-nll, tcp).
        #[arg(long)]
        task: Option<String>,
        /// Override the model and training seeds.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a test manifest.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the active-learning adaptation curve.
    Curve {
        #[arg(long)]
        config: PathBuf,
        /// Reuse completed (criterion, budget, seed) cells.
        #[arg(long, default_value_t = false)]
        resume: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the model and training seeds.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_task(s: &str) -> Result<Task, Error> {
    match s {
        "M1" | "m1" => Ok(Task::M1),
        "M2" | "m2" => Ok(Task::M2),
        "R1" | "r1" => Ok(Task::R1),
        "R2" | "r2" => Ok(Task::R2),
        "beta-nll" | "beta_nll" => Ok(Task::BetaNll),
        "tcp" | "TCP" => Ok(Task::Tcp),
        other => Err(Error::config(format!("unknown task {other:?}"))),
    }
}

fn apply_overrides(
    cfg: &mut ExperimentConfig,
    task: Option<String>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), Error> {
    if let Some(t) = task {
        cfg.task = parse_task(&t)?;
    }
    if let Some(s) = seed {
        cfg.model.seed = s;
        cfg.training.seed = s;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    cfg.validate()
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth {
            spec,
            count,
            seed,
            out,
        } => commands::cmd_synth(&spec, count, seed, &out),
        Command::Train {
            config,
            task,
            seed,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            apply_overrides(&mut cfg, task, seed, out)?;
            commands::cmd_train(&cfg)
        }
        Command::Eval {
            config,
            checkpoint,
            manifest,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            commands::cmd_eval(&cfg, &checkpoint, &manifest, out)
        }
        Command::Curve {
            config,
            resume,
            out,
            seed,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            apply_overrides(&mut cfg, None, seed, out)?;
            commands::cmd_curve(&cfg, resume)
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Format(_) | Error::Parse { .. } | Error::Json(_) => 2,
        Error::Io(_) | Error::Wav(_) => 3,
        Error::Numeric(_) | Error::Shape(_) | Error::State(_) => 4,
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
