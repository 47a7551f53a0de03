//! Command-line driver for the staged Boundary-RL pipeline.

mod commands;
mod config;
mod layout;
mod meta;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::RunConfig;
use layout::Layout;

#[derive(Debug, Parser)]
#[command(name = "boundary-rl", version, about = "Weakly-supervised boundary delineation with a patch-moving RL controller")]
struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for per-image fan-out.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Output directory.
    #[arg(long, global = true, env = "BOUNDARY_RL_OUT")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate train/test phantoms and a manifest.
    GenData,
    /// Train the patch presence classifier on the training split.
    TrainClassifier,
    /// Train the PPO controller with the frozen classifier as reward.
    TrainRl,
    /// Delineate one PGM image.
    Segment {
        #[arg(long)]
        image: PathBuf,
        /// Output subdirectory name; defaults to the image file stem.
        #[arg(long)]
        name: Option<String>,
    },
    /// Score Boundary-RL and the sliding-window baseline on the test split.
    Evaluate,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate().context("invalid configuration")?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.max(1))
        .build_global()
        .context("configuring worker pool")?;
    let layout = Layout::new(out);
    match cli.command {
        Command::GenData => {
            let m = commands::gen_data(&cfg, &layout)?;
            eprintln!(
                "gen-data: {} train, {} test phantoms in {}",
                m.train.len(),
                m.test.len(),
                layout.rel(&layout.data())
            );
        }
        Command::TrainClassifier => commands::train_classifier_cmd(&cfg, &layout)?,
        Command::TrainRl => commands::train_rl_cmd(&cfg, &layout)?,
        Command::Segment { image, name } => {
            let dir = commands::segment_cmd(&cfg, &layout, &image, name)?;
            eprintln!("segment: wrote {}", dir.display());
        }
        Command::Evaluate => {
            commands::evaluate_cmd(&cfg, &layout)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
