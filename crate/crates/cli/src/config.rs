//! Pipeline configuration: one JSON file, every key optional, unknown keys
//! rejected. Relative paths resolve against the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use coinforge_core::dataset::{SplitMode, DEFAULT_TEST_FRACTION};
use coinforge_core::houghdetect::DetectParams;
use coinforge_core::tinynn::ModelConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub raw_dir: PathBuf,
    pub cleaned_dir: PathBuf,
    pub augmented_dir: PathBuf,
    pub manifest_path: PathBuf,
    pub split_manifest_path: PathBuf,
    pub model_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            raw_dir: "raw".into(),
            cleaned_dir: "cleaned".into(),
            augmented_dir: "augmented".into(),
            manifest_path: "manifest.tsv".into(),
            split_manifest_path: "split.tsv".into(),
            model_dir: "model".into(),
            report_dir: "report".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CleanConfig {
    /// Crop side as a multiple of the detected diameter.
    pub margin: f64,
    /// Largest tolerated fraction of raw images without a detected coin.
    pub max_skip_rate: f64,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig { margin: 1.10, max_skip_rate: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub fraction: f64,
    pub seed: u64,
    pub mode: SplitMode,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { fraction: DEFAULT_TEST_FRACTION, seed: 0, mode: SplitMode::Grouped }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub model: String,
    /// 6 (side-aware classes) or 3 (denominations).
    pub num_classes: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { model: "coinnet-s".into(), num_classes: 6, epochs: 30, batch_size: 32, lr: 1e-3, seed: 0 }
    }
}

impl TrainConfig {
    pub fn model_config(&self) -> Result<ModelConfig, CliError> {
        match self.model.as_str() {
            "coinnet-s" => Ok(ModelConfig::coinnet_s(
                self.num_classes,
                coinforge_core::houghdetect::CLEAN_SIZE,
                coinforge_core::houghdetect::CLEAN_SIZE,
            )),
            other => Err(CliError::User(format!("unknown model {other:?} (available: coinnet-s)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub snapshot_epoch: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { snapshot_epoch: 30 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub detect: DetectParams,
    pub clean: CleanConfig,
    pub split: SplitConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let user = |m: String| Err(CliError::User(m));
        if !(self.split.fraction > 0.0 && self.split.fraction < 1.0) {
            return user(format!("split.fraction must lie in (0, 1), got {}", self.split.fraction));
        }
        if !(0.0..=1.0).contains(&self.clean.max_skip_rate) {
            return user(format!("clean.max_skip_rate must lie in [0, 1], got {}", self.clean.max_skip_rate));
        }
        if !(self.clean.margin.is_finite() && self.clean.margin > 0.0) {
            return user(format!("clean.margin must be positive, got {}", self.clean.margin));
        }
        if self.eval.snapshot_epoch > self.train.epochs {
            return user(format!(
                "eval.snapshot_epoch ({}) exceeds train.epochs ({})",
                self.eval.snapshot_epoch, self.train.epochs
            ));
        }
        if self.train.num_classes != 6 && self.train.num_classes != 3 {
            return user(format!("train.num_classes must be 6 or 3, got {}", self.train.num_classes));
        }
        if self.train.batch_size == 0 {
            return user("train.batch_size must be positive".into());
        }
        if !(self.train.lr.is_finite() && self.train.lr > 0.0) {
            return user(format!("train.lr must be positive, got {}", self.train.lr));
        }
        self.detect.validate().map_err(|e| CliError::User(e.to_string()))?;
        self.train.model_config()?.validate().map_err(|e| CliError::User(e.to_string()))?;
        Ok(())
    }

    /// Makes relative paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for path in [
            &mut p.raw_dir,
            &mut p.cleaned_dir,
            &mut p.augmented_dir,
            &mut p.manifest_path,
            &mut p.split_manifest_path,
            &mut p.model_dir,
            &mut p.report_dir,
        ] {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Config with paths blanked out, so that identical settings hash alike
    /// wherever the data lives.
    pub fn settings_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("object").remove("paths");
        v
    }

    /// SHA-256 of the compact settings JSON, hex encoded.
    pub fn settings_hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.settings_json()).expect("serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn parse_config(text: &str) -> Result<PipelineConfig, CliError> {
    if text.trim().is_empty() {
        return Err(CliError::User("config file is empty".into()));
    }
    let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| {
        CliError::User(format!("config: {} (line {}, column {})", strip_position(&e), e.line(), e.column()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn strip_position(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_owned(),
        None => s,
    }
}

/// Reads and validates a config file; paths resolve against its directory.
pub fn load_config(path: &Path) -> Result<PipelineConfig, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::User(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}
