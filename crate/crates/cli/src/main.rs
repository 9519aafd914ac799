mod commands;
mod config;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{Overrides, Preset, RunConfig};

/// GAN-augmented volumetric classification on real or phantom scans.
#[derive(Parser, Debug)]
#[command(name = "slicegan", version, about)]
struct Cli {
    /// TOML run configuration; its values override the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: $SLICEGAN_OUT or ./slicegan-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Upper bound on parallel training jobs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Default settings to start from [default: desk].
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic phantom dataset and its manifest.
    Phantom(commands::PhantomArgs),
    /// Reduce volumes to GAN-side slice stacks.
    Preprocess(commands::InputArgs),
    /// Train the per-class, per-depth GAN bank with snapshots and loss logs.
    TrainGan(commands::InputArgs),
    /// Generate stacks from a trained bank.
    Synthesize(commands::SynthesizeArgs),
    /// Train one classifier and evaluate it on the held-out test set.
    TrainClassifier(commands::TrainClassifierArgs),
    /// Run the augmentation-ratio sweep and render its reports.
    Sweep(commands::SweepArgs),
    /// Render reports from an experiment log.
    Report(commands::ReportArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let overrides = Overrides {
        preset: cli.preset,
        seed: cli.seed,
        out: cli.out,
        jobs: cli.jobs,
    };
    let cfg = RunConfig::resolve(cli.config.as_deref(), &overrides)?;
    match &cli.command {
        Command::Phantom(a) => commands::phantom(cfg, a),
        Command::Preprocess(a) => commands::preprocess(cfg, a),
        Command::TrainGan(a) => commands::train_gan(cfg, a),
        Command::Synthesize(a) => commands::synthesize(cfg, a),
        Command::TrainClassifier(a) => commands::train_classifier_cmd(cfg, a),
        Command::Sweep(a) => commands::sweep(cfg, a),
        Command::Report(a) => commands::report(cfg, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
