//! Labels, manifests and the stratified train/test split over the augmented
//! database.
//!
//! Images live under `<root>/<rupees>/<side>/<style>/`, e.g.
//! `2/obverse/3/c017-04_rot010.pgm`. The manifest is a tab-separated file
//! with one header line and one line per image.

mod label;
mod manifest;
mod split;

pub use label::{
    denomination_mapping, merge_label, CoinLabel, Denomination, Side, CLASS3_NAMES, CLASS6_NAMES, NUM_CLASSES3,
    NUM_CLASSES6,
};
pub use manifest::{
    build_manifest, check_consistency, manifest_to_string, parse_manifest, read_manifest, read_provenance,
    record_for_path, write_manifest, write_provenance, Manifest, ManifestRecord, PathIssue, ProvenanceEntry, Split,
    IMAGE_EXTENSIONS, MANIFEST_HEADER, PROVENANCE_FILE,
};
pub use split::{split, test_count, SplitMode, DEFAULT_TEST_FRACTION};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("class index {0} out of range 0..6")]
    ClassIndex(usize),
    #[error("{0}")]
    Label(String),
    #[error("{} unparseable path(s): {}", .0.len(), .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Unparseable(Vec<PathIssue>),
    #[error("inconsistent manifest: {0}")]
    Inconsistent(String),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("test fraction must lie in (0, 1), got {0}")]
    Fraction(f64),
    #[error("cannot split an empty manifest")]
    EmptyManifest,
    #[error("class {0} has no records")]
    EmptyClass(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
