//! `linfilt`: dataset preparation, shadow-model training, unlearning, attack
//! and KS evaluation, label audits and model inversion from one config file.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use linfilt::filtration::Strategy;

pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] linfilt::Error),
}

#[derive(Debug, Parser)]
#[command(name = "linfilt", version, about = "Class unlearning by linear filtration of the logit layer")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON experiment config; defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `base_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Restricts the run to one strategy.
    #[arg(long, global = true)]
    strategy: Option<Strategy>,
    /// Deleted classes, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    classes: Option<Vec<usize>>,
    /// Models per shadow pool.
    #[arg(long, global = true)]
    models: Option<usize>,
    /// Per-class cap on rows used for class means.
    #[arg(long, global = true)]
    sample_size: Option<usize>,
    /// Random directions for KS statistics.
    #[arg(long, global = true)]
    directions: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the configured train/test splits as dataset JSON files.
    SynthData,
    /// Train one model on the full training split.
    Train,
    /// Filter a trained model's logit layer.
    Unlearn {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train the shadow pools and write per-strategy logit records.
    ShadowRun,
    /// Per-class attack advantages from a records file.
    Attack {
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Random-direction KS statistics from a records file.
    Ks {
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Label changes of `--other` relative to the naive-filtered `--model`.
    LabelAudit {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        other: PathBuf,
    },
    /// Reconstruct one input per class by gradient ascent.
    Invert {
        #[arg(long)]
        model: Option<PathBuf>,
        /// File-name tag, defaults to the model file stem.
        #[arg(long)]
        tag: Option<String>,
        /// Treat outputs as the retained classes of an unlearned model.
        #[arg(long)]
        unlearned: bool,
    },
    /// Run every stage.
    Full,
}

fn resolve(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.base_seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(s) = common.strategy {
        cfg.strategies = vec![s];
    }
    if let Some(c) = &common.classes {
        cfg.deleted = c.clone();
    }
    if let Some(n) = common.models {
        cfg.models_per_pool = n;
    }
    if let Some(s) = common.sample_size {
        cfg.sample_size = Some(s);
    }
    if let Some(d) = common.directions {
        cfg.directions = d;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli.common)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    match cli.command {
        Command::SynthData => commands::synth_data(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Unlearn { model } => commands::unlearn(&cfg, model),
        Command::ShadowRun => commands::shadow_run(&cfg),
        Command::Attack { records } => commands::attack(&cfg, records),
        Command::Ks { records } => commands::ks(&cfg, records),
        Command::LabelAudit { model, other } => commands::label_audit(&cfg, &model, &other),
        Command::Invert { model, tag, unlearned } => commands::invert(&cfg, model, tag, unlearned),
        Command::Full => commands::full(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
