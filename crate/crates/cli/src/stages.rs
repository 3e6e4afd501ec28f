//! One function per pipeline stage. Each reads only its input artifacts and
//! writes only its outputs plus a `run_<stage>.json` metadata record.

use std::collections::BTreeMap;
use std::fs;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use coinforge_core::augment::expand;
use coinforge_core::dataset::{
    self, build_manifest, merge_label, read_manifest, write_manifest, write_provenance, ManifestRecord,
    ProvenanceEntry, Split, CLASS3_NAMES, CLASS6_NAMES, IMAGE_EXTENSIONS, PROVENANCE_FILE,
};
use coinforge_core::evalreport::{emit_report, ConfusionMatrix, Report, RunInfo};
use coinforge_core::houghdetect::{clean_image, DetectError};
use coinforge_core::raster::{read_image, read_pnm, write_pnm};
use coinforge_core::tinynn::{
    encode_checkpoint, epoch_csv, predict_set, read_checkpoint, train_with, EpochMetrics, ImageSet, NnError,
    TrainOptions,
};
use rayon::prelude::*;
use serde::Serialize;
use walkdir::WalkDir;

use crate::config::PipelineConfig;
use crate::CliError;

pub const SKIP_REPORT: &str = "skipped.tsv";
pub const CHECKPOINT_FILE: &str = "snapshot.cfnn";
pub const HISTORY_FILE: &str = "history.json";
pub const EPOCH_CSV: &str = "epochs.csv";
pub const PREDICTIONS_FILE: &str = "predictions.tsv";

fn io(context: &str, path: &Path) -> impl FnOnce(std::io::Error) -> CliError {
    let message = format!("{context} {}", path.display());
    move |e| CliError::Internal(format!("{message}: {e}"))
}

fn user(e: impl std::fmt::Display) -> CliError {
    CliError::User(e.to_string())
}

#[derive(Serialize)]
struct RunMeta<'a> {
    stage: &'a str,
    tool_version: &'a str,
    settings_sha256: String,
    split_seed: u64,
    train_seed: u64,
    counts: BTreeMap<&'a str, usize>,
}

/// Writes `run_<stage>.json` into `dir`.
fn write_meta(dir: &Path, stage: &str, cfg: &PipelineConfig, counts: &[(&'static str, usize)]) -> Result<(), CliError> {
    let meta = RunMeta {
        stage,
        tool_version: env!("CARGO_PKG_VERSION"),
        settings_sha256: cfg.settings_hash(),
        split_seed: cfg.split.seed,
        train_seed: cfg.train.seed,
        counts: counts.iter().copied().collect(),
    };
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    text.push('\n');
    let path = dir.join(format!("run_{stage}.json"));
    fs::write(&path, text).map_err(io("cannot write", &path))
}

fn parent_dir(file: &Path) -> PathBuf {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io("cannot create", dir))
}

/// Image files under `root`, as sorted `/`-separated relative paths.
fn list_images(root: &Path, extensions: &[&str]) -> Result<Vec<String>, CliError> {
    if !root.is_dir() {
        return Err(CliError::User(format!("input directory {} does not exist", root.display())));
    }
    let mut out = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::Internal(format!("cannot scan {}: {e}", root.display())))?;
        let ext = entry.path().extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if entry.file_type().is_file() && ext.is_some_and(|e| extensions.contains(&e.as_str())) {
            let rel = entry.path().strip_prefix(root).expect("under root");
            let parts: Vec<&str> = rel.iter().map(|c| c.to_str().unwrap_or("\u{fffd}")).collect();
            out.push(parts.join("/"));
        }
    }
    out.sort();
    Ok(out)
}

fn with_pgm_extension(rel: &str) -> String {
    match rel.rsplit_once('.') {
        Some((stem, _)) => format!("{stem}.pgm"),
        None => format!("{rel}.pgm"),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CleanSummary {
    pub inputs: usize,
    pub cleaned: usize,
    pub skipped: Vec<(String, String)>,
}

/// Detects, crops, resizes and converts every raw image. Images without a
/// detected coin go to the skip report.
pub fn clean(cfg: &PipelineConfig, input: &Path, output: &Path) -> Result<CleanSummary, CliError> {
    let files = list_images(input, &IMAGE_EXTENSIONS)?;
    if files.is_empty() {
        return Err(CliError::User(format!("no input images in {}", input.display())));
    }
    create_dir(output)?;
    let results: Vec<Result<Option<String>, CliError>> = files
        .par_iter()
        .map(|rel| {
            let src = input.join(rel);
            let img = read_image(&src).map_err(|e| CliError::User(format!("{}: {e}", src.display())))?;
            match clean_image(&img, &cfg.detect, cfg.clean.margin) {
                Ok(cleaned) => {
                    let dst = output.join(with_pgm_extension(rel));
                    create_dir(&parent_dir(&dst))?;
                    write_pnm(&cleaned, &dst).map_err(|e| CliError::Internal(format!("{}: {e}", dst.display())))?;
                    Ok(None)
                }
                Err(e @ DetectError::NoCoinFound { .. }) => Ok(Some(e.to_string())),
                Err(e) => Err(CliError::Internal(format!("{}: {e}", src.display()))),
            }
        })
        .collect();
    let mut skipped = Vec::new();
    for (rel, r) in files.iter().zip(results) {
        if let Some(reason) = r? {
            skipped.push((rel.clone(), reason));
        }
    }
    let mut report = String::from("path\treason\n");
    for (p, r) in &skipped {
        report.push_str(&format!("{p}\t{r}\n"));
    }
    let report_path = output.join(SKIP_REPORT);
    fs::write(&report_path, report).map_err(io("cannot write", &report_path))?;
    let summary = CleanSummary { inputs: files.len(), cleaned: files.len() - skipped.len(), skipped };
    write_meta(
        output,
        "clean",
        cfg,
        &[("inputs", summary.inputs), ("cleaned", summary.cleaned), ("skipped", summary.skipped.len())],
    )?;
    let rate = summary.skipped.len() as f64 / summary.inputs as f64;
    if rate > cfg.clean.max_skip_rate {
        return Err(CliError::Internal(format!(
            "no coin found in {} of {} images ({:.2}%), above the allowed {:.2}%; see {}",
            summary.skipped.len(),
            summary.inputs,
            rate * 100.0,
            cfg.clean.max_skip_rate * 100.0,
            report_path.display()
        )));
    }
    Ok(summary)
}

/// Writes the original plus every augmentation of each cleaned image, and
/// the provenance sidecar. Returns the number of files written.
pub fn augment(cfg: &PipelineConfig, input: &Path, output: &Path) -> Result<usize, CliError> {
    let files = list_images(input, &["pgm"])?;
    if files.is_empty() {
        return Err(CliError::User(format!("no input images in {}", input.display())));
    }
    create_dir(output)?;
    let per_image: Vec<Result<Vec<ProvenanceEntry>, CliError>> = files
        .par_iter()
        .map(|rel| {
            let src = input.join(rel);
            let img = read_pnm(&src).map_err(|e| CliError::User(format!("{}: {e}", src.display())))?;
            let (dir, file) = rel.rsplit_once('/').unwrap_or(("", rel));
            let stem = file.strip_suffix(".pgm").unwrap_or(file);
            let variants = expand(&img, stem).map_err(|e| CliError::User(format!("{}: {e}", src.display())))?;
            let out_dir = output.join(dir);
            create_dir(&out_dir)?;
            let source_image_id = if dir.is_empty() { stem.to_owned() } else { format!("{dir}/{stem}") };
            let mut entries = Vec::with_capacity(variants.len());
            for v in variants {
                let name = v.file_name();
                let dst = out_dir.join(&name);
                write_pnm(&v.image, &dst).map_err(|e| CliError::Internal(format!("{}: {e}", dst.display())))?;
                let path = if dir.is_empty() { name } else { format!("{dir}/{name}") };
                entries.push(ProvenanceEntry { path, source_image_id: source_image_id.clone(), augment_tag: v.tag });
            }
            Ok(entries)
        })
        .collect();
    let mut entries = Vec::new();
    for r in per_image {
        entries.extend(r?);
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    write_provenance(&entries, &output.join(PROVENANCE_FILE)).map_err(|e| CliError::Internal(e.to_string()))?;
    write_meta(output, "augment", cfg, &[("inputs", files.len()), ("outputs", entries.len())])?;
    Ok(entries.len())
}

/// Scans the augmented tree into a labeled manifest.
pub fn manifest(cfg: &PipelineConfig, input: &Path, output: &Path) -> Result<usize, CliError> {
    if !input.is_dir() {
        return Err(CliError::User(format!("input directory {} does not exist", input.display())));
    }
    let records = build_manifest(input).map_err(user)?;
    if records.is_empty() {
        return Err(CliError::User(format!("no input images in {}", input.display())));
    }
    create_dir(&parent_dir(output))?;
    write_manifest(&records, output).map_err(|e| CliError::Internal(e.to_string()))?;
    write_meta(&parent_dir(output), "manifest", cfg, &[("records", records.len())])?;
    Ok(records.len())
}

fn load_manifest(path: &Path) -> Result<Vec<ManifestRecord>, CliError> {
    if !path.is_file() {
        return Err(CliError::User(format!("manifest {} does not exist", path.display())));
    }
    read_manifest(path).map_err(user)
}

/// Assigns train/test to every manifest record. Returns the test count.
pub fn split(cfg: &PipelineConfig, input: &Path, output: &Path) -> Result<usize, CliError> {
    let records = load_manifest(input)?;
    let assigned = dataset::split(&records, cfg.split.fraction, cfg.split.seed, cfg.split.mode).map_err(user)?;
    create_dir(&parent_dir(output))?;
    write_manifest(&assigned, output).map_err(|e| CliError::Internal(e.to_string()))?;
    let test = assigned.iter().filter(|r| r.split == Split::Test).count();
    write_meta(&parent_dir(output), "split", cfg, &[("test", test), ("train", assigned.len() - test)])?;
    Ok(test)
}

fn class_of(cfg: &PipelineConfig, r: &ManifestRecord) -> usize {
    if cfg.train.num_classes == 3 {
        merge_label(r.class6()).expect("class6 in range")
    } else {
        r.class6()
    }
}

fn load_set(cfg: &PipelineConfig, root: &Path, records: &[&ManifestRecord]) -> Result<ImageSet, CliError> {
    let images: Vec<_> = records
        .par_iter()
        .map(|r| {
            let path = root.join(&r.path);
            read_pnm(&path).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
        })
        .collect::<Result<_, _>>()?;
    let size = coinforge_core::houghdetect::CLEAN_SIZE;
    let mut set = ImageSet::new(1, size, size);
    for (img, r) in images.iter().zip(records) {
        set.push_raster(img, class_of(cfg, r)).map_err(|e| CliError::User(format!("{}: {e}", r.path)))?;
    }
    Ok(set)
}

fn records_of(records: &[ManifestRecord], which: Split) -> Vec<&ManifestRecord> {
    records.iter().filter(|r| r.split == which).collect()
}

fn nn_error(e: NnError) -> CliError {
    match e {
        NnError::Io(e) => CliError::Internal(e.to_string()),
        NnError::Diverged { .. } | NnError::NonFinite { .. } => CliError::Internal(e.to_string()),
        other => CliError::User(other.to_string()),
    }
}

/// Trains on the split manifest's train records, evaluating on its test
/// records every epoch, and stores the snapshot-epoch weights.
pub fn train(cfg: &PipelineConfig, input: &Path, images: &Path, output: &Path) -> Result<Vec<EpochMetrics>, CliError> {
    let records = load_manifest(input)?;
    let (train_recs, test_recs) = (records_of(&records, Split::Train), records_of(&records, Split::Test));
    if train_recs.is_empty() || test_recs.is_empty() {
        return Err(CliError::User(format!("{} has no train/test assignment; run split first", input.display())));
    }
    let model = cfg.train.model_config()?;
    let train_set = load_set(cfg, images, &train_recs)?;
    let test_set = load_set(cfg, images, &test_recs)?;
    let options = TrainOptions {
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        seed: cfg.train.seed,
        adam: coinforge_core::tinynn::AdamConfig { lr: cfg.train.lr, ..Default::default() },
    };
    let snapshot = cfg.eval.snapshot_epoch;
    let mut checkpoint = None;
    let outcome = train_with(&model, &train_set, &test_set, &options, |view| {
        if view.metrics.epoch == snapshot {
            checkpoint = Some(encode_checkpoint(&model, &view.state.params));
        }
        ControlFlow::Continue(())
    })
    .map_err(nn_error)?;
    let checkpoint = checkpoint.expect("snapshot epoch within range").map_err(nn_error)?;
    create_dir(output)?;
    let write = |name: &str, bytes: &[u8]| {
        let path = output.join(name);
        fs::write(&path, bytes).map_err(io("cannot write", &path))
    };
    write(CHECKPOINT_FILE, &checkpoint)?;
    write(EPOCH_CSV, epoch_csv(&outcome.history).as_bytes())?;
    let mut history = serde_json::to_string_pretty(&outcome.history).expect("serializes");
    history.push('\n');
    write(HISTORY_FILE, history.as_bytes())?;
    write_meta(
        output,
        "train",
        cfg,
        &[
            ("train", train_set.len()),
            ("test", test_set.len()),
            ("epochs", cfg.train.epochs),
            ("snapshot_epoch", snapshot),
        ],
    )?;
    Ok(outcome.history)
}

fn class_names(n: usize) -> Vec<&'static str> {
    if n == 3 {
        CLASS3_NAMES.to_vec()
    } else {
        CLASS6_NAMES.to_vec()
    }
}

/// Predicts the test records with the snapshot weights and writes
/// `predictions.tsv` (`path`, `actual`, `predicted`, as class indices).
pub fn eval(cfg: &PipelineConfig, model_dir: &Path, output: &Path) -> Result<ConfusionMatrix, CliError> {
    let ckpt = model_dir.join(CHECKPOINT_FILE);
    if !ckpt.is_file() {
        return Err(CliError::User(format!("checkpoint {} does not exist; run train first", ckpt.display())));
    }
    let (model, params) = read_checkpoint(&ckpt).map_err(nn_error)?;
    let n = model.num_classes().map_err(nn_error)?;
    if n != cfg.train.num_classes {
        return Err(CliError::User(format!("checkpoint has {n} classes, config expects {}", cfg.train.num_classes)));
    }
    let records = load_manifest(&cfg.paths.split_manifest_path)?;
    let test_recs = records_of(&records, Split::Test);
    if test_recs.is_empty() {
        return Err(CliError::User("split manifest has no test records".into()));
    }
    let set = load_set(cfg, &cfg.paths.augmented_dir, &test_recs)?;
    let preds = predict_set(&model, &params, &set).map_err(nn_error)?;
    let mut text = String::from("path\tactual\tpredicted\n");
    for ((r, &actual), &p) in test_recs.iter().zip(set.labels()).zip(&preds) {
        text.push_str(&format!("{}\t{actual}\t{p}\n", r.path));
    }
    create_dir(output)?;
    let path = output.join(PREDICTIONS_FILE);
    fs::write(&path, text).map_err(io("cannot write", &path))?;
    write_meta(output, "eval", cfg, &[("test", preds.len())])?;
    ConfusionMatrix::from_predictions(set.labels(), &preds, &class_names(n)).map_err(user)
}

fn read_predictions(path: &Path, n: usize) -> Result<ConfusionMatrix, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::User(format!("cannot read {}: {e}; run eval first", path.display())))?;
    let (mut truths, mut preds) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split('\t').collect();
        let parse = |s: &str| {
            s.parse::<usize>().map_err(|_| CliError::User(format!("{}:{}: bad class {s:?}", path.display(), i + 1)))
        };
        let [_, a, p] = fields.as_slice() else {
            return Err(CliError::User(format!("{}:{}: expected 3 fields", path.display(), i + 1)));
        };
        truths.push(parse(a)?);
        preds.push(parse(p)?);
    }
    ConfusionMatrix::from_predictions(&truths, &preds, &class_names(n)).map_err(user)
}

/// Builds `report.json` and the matrix CSVs from the predictions and the
/// training history.
pub fn report(cfg: &PipelineConfig, model_dir: &Path, output: &Path) -> Result<Report, CliError> {
    let matrix = read_predictions(&output.join(PREDICTIONS_FILE), cfg.train.num_classes)?;
    let history_path = model_dir.join(HISTORY_FILE);
    let history: Vec<EpochMetrics> = fs::read_to_string(&history_path)
        .map_err(|e| CliError::User(format!("cannot read {}: {e}; run train first", history_path.display())))
        .and_then(|t| serde_json::from_str(&t).map_err(user))?;
    let mut settings = cfg.settings_json();
    settings["settings_sha256"] = cfg.settings_hash().into();
    let run = RunInfo {
        split_mode: Some(cfg.split.mode.to_string()),
        seed: Some(cfg.train.seed),
        snapshot_epoch: Some(cfg.eval.snapshot_epoch),
        config: settings,
    };
    let report = if cfg.train.num_classes == 3 {
        Report::build_merged(&matrix, history, run)
    } else {
        Report::build(Some(&matrix), history, run)
    }
    .map_err(user)?;
    emit_report(&report, output).map_err(|e| CliError::Internal(e.to_string()))?;
    write_meta(output, "report", cfg, &[("observations", matrix.total() as usize)])?;
    Ok(report)
}

/// Every stage in order, using the configured paths.
pub fn pipeline(cfg: &PipelineConfig) -> Result<Report, CliError> {
    let p = &cfg.paths;
    clean(cfg, &p.raw_dir, &p.cleaned_dir)?;
    augment(cfg, &p.cleaned_dir, &p.augmented_dir)?;
    manifest(cfg, &p.augmented_dir, &p.manifest_path)?;
    split(cfg, &p.manifest_path, &p.split_manifest_path)?;
    train(cfg, &p.split_manifest_path, &p.augmented_dir, &p.model_dir)?;
    eval(cfg, &p.model_dir, &p.report_dir)?;
    report(cfg, &p.model_dir, &p.report_dir)
}
