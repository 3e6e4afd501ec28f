//! `coinforge` command line: one subcommand per pipeline stage, driven by a
//! JSON config with deterministic seeds.

pub mod config;
pub mod stages;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use coinforge_core::dataset::SplitMode;
use coinforge_core::synth::{coin_photos, write_photo_tree};
use thiserror::Error;

pub use config::{load_config, parse_config, PipelineConfig};

pub const THREADS_ENV: &str = "COINFORGE_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config, flags or input data. Exit status 1.
    #[error("{0}")]
    User(String),
    /// Failure while running a stage. Exit status 2.
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "coinforge", version, about = "Coin-image dataset pipeline and classifier")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON pipeline config; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Stage input (directory or manifest file), overriding the config.
    #[arg(long = "in", global = true)]
    pub input: Option<PathBuf>,
    /// Stage output (directory or manifest file), overriding the config.
    #[arg(long = "out", global = true)]
    pub output: Option<PathBuf>,
    /// Seed for both the split and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_split_mode)]
    pub split_mode: Option<SplitMode>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub snapshot_epoch: Option<usize>,
}

fn parse_split_mode(s: &str) -> Result<SplitMode, String> {
    s.parse().map_err(|e: coinforge_core::dataset::DatasetError| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect, center, crop, resize and gray-convert raw photographs.
    Clean,
    /// Write every cleaned image plus its 38 rotated/brightened variants.
    Augment,
    /// Label the augmented tree from its directory layout.
    Manifest,
    /// Assign train/test to manifest records.
    Split,
    /// Train the network and store the snapshot-epoch weights.
    Train,
    /// Predict the test records with the snapshot weights.
    Eval,
    /// Confusion matrices and metrics from the predictions.
    Report,
    /// All stages in order.
    Pipeline,
    /// Render a synthetic raw photo tree.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Photographs per class.
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    /// Distinct physical coins per class.
    #[arg(long, default_value_t = 10)]
    pub coins_per_class: usize,
}

/// Applies command-line overrides to the config and re-validates it.
pub fn effective_config(global: &GlobalArgs) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &global.config {
        Some(path) => load_config(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.split.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(mode) = global.split_mode {
        cfg.split.mode = mode;
    }
    if let Some(epochs) = global.epochs {
        cfg.train.epochs = epochs;
        if global.snapshot_epoch.is_none() && cfg.eval.snapshot_epoch > epochs {
            cfg.eval.snapshot_epoch = epochs;
        }
    }
    if let Some(snap) = global.snapshot_epoch {
        cfg.eval.snapshot_epoch = snap;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pick(flag: &Option<PathBuf>, default: &Path) -> PathBuf {
    flag.clone().unwrap_or_else(|| default.to_path_buf())
}

/// Runs one parsed command line; the caller maps errors to exit codes.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let cfg = effective_config(&cli.global)?;
    let p = &cfg.paths;
    let (i, o) = (&cli.global.input, &cli.global.output);
    Ok(match &cli.command {
        Command::Clean => {
            let s = stages::clean(&cfg, &pick(i, &p.raw_dir), &pick(o, &p.cleaned_dir))?;
            format!("cleaned {} of {} images ({} skipped)", s.cleaned, s.inputs, s.skipped.len())
        }
        Command::Augment => {
            let n = stages::augment(&cfg, &pick(i, &p.cleaned_dir), &pick(o, &p.augmented_dir))?;
            format!("wrote {n} augmented images")
        }
        Command::Manifest => {
            let n = stages::manifest(&cfg, &pick(i, &p.augmented_dir), &pick(o, &p.manifest_path))?;
            format!("manifest lists {n} images")
        }
        Command::Split => {
            let n = stages::split(&cfg, &pick(i, &p.manifest_path), &pick(o, &p.split_manifest_path))?;
            format!("{n} records assigned to test")
        }
        Command::Train => {
            let h = stages::train(&cfg, &pick(i, &p.split_manifest_path), &p.augmented_dir, &pick(o, &p.model_dir))?;
            let last = h.last().expect("epoch 0 recorded");
            format!("trained {} epochs, final test accuracy {:.4}", last.epoch, last.test_accuracy)
        }
        Command::Eval => {
            let m = stages::eval(&cfg, &pick(i, &p.model_dir), &pick(o, &p.report_dir))?;
            format!("test accuracy {:.4} over {} images", m.accuracy().unwrap_or(0.0), m.total())
        }
        Command::Report => {
            let r = stages::report(&cfg, &pick(i, &p.model_dir), &pick(o, &p.report_dir))?;
            summary_line(&r)
        }
        Command::Pipeline => {
            let mut cfg = cfg.clone();
            if let Some(raw) = i {
                cfg.paths.raw_dir = raw.clone();
            }
            if let Some(report) = o {
                cfg.paths.report_dir = report.clone();
            }
            summary_line(&stages::pipeline(&cfg)?)
        }
        Command::Synth(args) => {
            let out = pick(o, &p.raw_dir);
            let photos = coin_photos(args.per_class, args.coins_per_class, cfg.split.seed);
            write_photo_tree(&out, &photos)
                .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", out.display())))?;
            format!("wrote {} synthetic photographs to {}", photos.len(), out.display())
        }
    })
}

fn summary_line(r: &coinforge_core::evalreport::Report) -> String {
    match r.metrics.get("accuracy_3class_percent") {
        Some(p) => format!("merged 3-class accuracy {p:.2}% over {} test images", r.metrics["observations"]),
        None => "report written".to_owned(),
    }
}

/// Caps the worker pool from `COINFORGE_THREADS`, if set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::User(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Internal(e.to_string()))
}
