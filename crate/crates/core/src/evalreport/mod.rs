//! Confusion matrices, 6→3 class merging, accuracy metrics and report files.

mod confusion;
pub mod fixtures;
mod report;

pub use confusion::{floored_percent, per_side_accuracy, percent_2dp, ConfusionMatrix, PER_SIDE_DEFINITION};
pub use report::{emit_report, matrix_csv, Report, RunInfo, REPORT_FILE, REPORT_SCHEMA_VERSION};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{truths} truths but {preds} predictions")]
    LengthMismatch { truths: usize, preds: usize },
    #[error("class {class} out of range for {n} classes")]
    ClassOutOfRange { class: usize, n: usize },
    #[error("mapping covers {mapped} of {n} classes")]
    PartialMapping { mapped: usize, n: usize },
    #[error("{0}")]
    Shape(String),
    #[error("accuracy of an empty matrix is undefined")]
    Empty,
    #[error("no {0} observations")]
    EmptySide(&'static str),
    #[error("fixture: {0}")]
    Fixture(String),
    #[error("report parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
