use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::confusion::{floored_percent, per_side_accuracy, percent_2dp, ConfusionMatrix, PER_SIDE_DEFINITION};
use super::EvalError;
use crate::dataset::{denomination_mapping, CLASS3_NAMES};
use crate::tinynn::EpochMetrics;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";

/// Run-level metadata echoed into every report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub split_mode: Option<String>,
    pub seed: Option<u64>,
    pub snapshot_epoch: Option<usize>,
    pub config: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub run: RunInfo,
    pub matrices: BTreeMap<String, ConfusionMatrix>,
    pub metrics: BTreeMap<String, f64>,
    pub definitions: BTreeMap<String, String>,
    pub epochs: Vec<EpochMetrics>,
}

impl Report {
    /// Report with every derived metric of a 6-class test matrix. `None`
    /// yields empty matrix and metric sections.
    pub fn build(m6: Option<&ConfusionMatrix>, epochs: Vec<EpochMetrics>, run: RunInfo) -> Result<Report, EvalError> {
        let mut matrices = BTreeMap::new();
        let mut metrics = BTreeMap::new();
        let mut definitions = BTreeMap::new();
        if let Some(m6) = m6 {
            let m3 = m6.merge(&denomination_mapping(), &CLASS3_NAMES)?;
            let acc3 = m3.accuracy()?;
            metrics.insert("accuracy_6class".into(), m6.accuracy()?);
            metrics.insert("accuracy_3class".into(), acc3);
            metrics.insert("accuracy_3class_percent".into(), percent_2dp(acc3));
            metrics.insert("accuracy_3class_floor".into(), floored_percent(acc3) as f64);
            metrics.insert("misclassified_3class".into(), m3.misclassified() as f64);
            metrics.insert("observations".into(), m3.total() as f64);
            if let Ok((obverse, reverse)) = per_side_accuracy(m6) {
                metrics.insert("obverse_accuracy".into(), obverse);
                metrics.insert("reverse_accuracy".into(), reverse);
                definitions.insert("per_side_accuracy".into(), PER_SIDE_DEFINITION.into());
            }
            definitions.insert("accuracy_3class_percent".into(), "percentage rounded half-up to two decimals".into());
            matrices.insert("three_class".into(), m3);
            matrices.insert("six_class".into(), m6.clone());
        }
        Ok(Report { schema_version: REPORT_SCHEMA_VERSION, run, matrices, metrics, definitions, epochs })
    }

    /// Report for a model trained directly on the three denomination classes.
    pub fn build_merged(m3: &ConfusionMatrix, epochs: Vec<EpochMetrics>, run: RunInfo) -> Result<Report, EvalError> {
        if m3.n() != CLASS3_NAMES.len() {
            return Err(EvalError::Shape(format!("expected 3 classes, got {}", m3.n())));
        }
        let acc3 = m3.accuracy()?;
        let metrics = BTreeMap::from([
            ("accuracy_3class".to_owned(), acc3),
            ("accuracy_3class_percent".to_owned(), percent_2dp(acc3)),
            ("accuracy_3class_floor".to_owned(), floored_percent(acc3) as f64),
            ("misclassified_3class".to_owned(), m3.misclassified() as f64),
            ("observations".to_owned(), m3.total() as f64),
        ]);
        let definitions = BTreeMap::from([(
            "accuracy_3class_percent".to_owned(),
            "percentage rounded half-up to two decimals".to_owned(),
        )]);
        let matrices = BTreeMap::from([("three_class".to_owned(), m3.clone())]);
        Ok(Report { schema_version: REPORT_SCHEMA_VERSION, run, matrices, metrics, definitions, epochs })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Report, EvalError> {
        let report: Report = serde_json::from_str(text).map_err(|e| EvalError::Parse(e.to_string()))?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(EvalError::Parse(format!("unsupported schema version {}", report.schema_version)));
        }
        Ok(report)
    }
}

/// Row-major CSV: header `actual,<predicted classes…>,total`, one row per
/// actual class, then a `total` row.
pub fn matrix_csv(m: &ConfusionMatrix) -> String {
    let mut out = String::from("actual");
    for c in m.classes() {
        out.push(',');
        out.push_str(c);
    }
    out.push_str(",total\n");
    for (name, row) in m.classes().iter().zip(m.counts()) {
        out.push_str(name);
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{}\n", row.iter().sum::<u64>()));
    }
    out.push_str("total");
    for v in m.column_totals() {
        out.push_str(&format!(",{v}"));
    }
    out.push_str(&format!(",{}\n", m.total()));
    out
}

/// Writes `report.json` plus `matrix_<name>.csv` for each matrix into `dir`.
pub fn emit_report(report: &Report, dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let json = dir.join(REPORT_FILE);
    fs::write(&json, report.to_json())?;
    written.push(json);
    for (name, m) in &report.matrices {
        let path = dir.join(format!("matrix_{name}.csv"));
        fs::write(&path, matrix_csv(m))?;
        written.push(path);
    }
    Ok(written)
}
