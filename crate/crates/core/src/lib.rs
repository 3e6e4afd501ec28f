//! Building blocks for a coin-image classification pipeline: raw photo →
//! detected and cropped coin → augmented variants → labeled manifest and
//! train/test split → CNN training → confusion-matrix reports.

pub mod augment;
pub mod dataset;
pub mod evalreport;
pub mod houghdetect;
pub mod raster;
pub mod synth;
pub mod tinynn;

pub use augment::{AugmentTag, Augmented};
pub use dataset::{CoinLabel, Denomination, Manifest, ManifestRecord, Side, Split, SplitMode};
pub use evalreport::{ConfusionMatrix, Report};
pub use houghdetect::{CircleHit, DetectParams};
pub use raster::{FillValue, Raster};
pub use tinynn::{EpochMetrics, ModelConfig, Tensor};
