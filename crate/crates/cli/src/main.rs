//! `sevot`: dataset generation, segmenter training, agent alternation,
//! evaluation, and standalone transport solves.

mod agent;
mod config;
mod data;
mod eval;
mod experiment;
mod ot;
mod output;
mod report;
mod seg;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crate::config::Config;
use crate::experiment::ExperimentConfig;
use crate::output::Run;

#[derive(Debug, Parser)]
#[command(name = "sevot", version, about = "Severity-aware transport experiments")]
struct Cli {
    /// Experiment config of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root of the experiment.
    #[arg(long, global = true, env = "SEVOT_OUT", default_value = "runs")]
    out: PathBuf,
    /// Suppress progress messages.
    #[arg(long, short, global = true)]
    quiet: bool,
    /// Overrides one config key, `--set train.lr=0.1`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the labelled scene dataset and its manifest.
    GenData,
    /// Pretrain the segmenter with cross-entropy, then fine-tune.
    TrainSeg,
    /// Alternate agent training with ground-matrix updates.
    TrainAgent,
    /// Segmentation and driving reports.
    Eval,
    /// Solve one transport problem from CSV inputs.
    #[command(subcommand)]
    Ot(ot::OtCommand),
}

fn experiment(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    for kv in &cli.overrides {
        let (key, value) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, found `{kv}`"))?;
        config.set(key, value);
    }
    if let Some(seed) = cli.seed {
        config.set("seed", &seed.to_string());
    }
    ExperimentConfig::from_config(config)
}

fn run(cli: &Cli) -> Result<()> {
    if let Command::Ot(cmd) = &cli.command {
        return ot::cmd_ot(cmd);
    }
    let cfg = experiment(cli)?;
    let run = Run {
        out: cli.out.clone(),
        quiet: cli.quiet,
    };
    match cli.command {
        Command::GenData => data::cmd_gen_data(&cfg, &run),
        Command::TrainSeg => seg::cmd_train_seg(&cfg, &run),
        Command::TrainAgent => agent::cmd_train_agent(&cfg, &run),
        Command::Eval => eval::cmd_eval(&cfg, &run),
        Command::Ot(_) => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
