//! The fixed 38-variant augmentation plan: 36 rotations in 10° steps and two
//! brightness scalings. Each cleaned image expands to 39 database entries
//! (itself plus 38 variants).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::houghdetect::CLEAN_SIZE;
use crate::raster::{Raster, RasterError};

/// Variants produced per input image.
pub const PLAN_LEN: usize = 38;
/// Database entries per input image (original included).
pub const FAN_OUT: usize = PLAN_LEN + 1;

pub const DARKEN_PERCENT: u16 = 67;
pub const BRIGHTEN_PERCENT: u16 = 133;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("augmentation input must be {CLEAN_SIZE}x{CLEAN_SIZE} grayscale, got {width}x{height}x{channels}")]
    Format { width: usize, height: usize, channels: usize },
    #[error("unrecognized augmentation tag {0:?}")]
    BadTag(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// One augmentation: a counter-clockwise rotation in whole degrees, or a
/// brightness scaling in percent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AugmentTag {
    Rotation { degrees: u16 },
    Brightness { percent: u16 },
}

impl AugmentTag {
    pub fn brightness_factor(percent: u16) -> f64 {
        percent as f64 / 100.0
    }
}

/// `rot010`, `bri067`, ...: the suffix used in file names and manifests.
impl fmt::Display for AugmentTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AugmentTag::Rotation { degrees } => write!(f, "rot{degrees:03}"),
            AugmentTag::Brightness { percent } => write!(f, "bri{percent:03}"),
        }
    }
}

impl FromStr for AugmentTag {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AugmentError::BadTag(s.to_owned());
        if s.len() != 6 || !s.is_ascii() {
            return Err(bad());
        }
        let (kind, digits) = s.split_at(3);
        if !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let value: u16 = digits.parse().map_err(|_| bad())?;
        match kind {
            "rot" => Ok(AugmentTag::Rotation { degrees: value }),
            "bri" => Ok(AugmentTag::Brightness { percent: value }),
            _ => Err(bad()),
        }
    }
}

/// Rotations 10°..=360° ascending, then darken, then brighten.
pub fn augment_plan() -> Vec<AugmentTag> {
    (1..=36)
        .map(|k| AugmentTag::Rotation { degrees: 10 * k })
        .chain([
            AugmentTag::Brightness { percent: DARKEN_PERCENT },
            AugmentTag::Brightness { percent: BRIGHTEN_PERCENT },
        ])
        .collect()
}

fn check_format(img: &Raster) -> Result<(), AugmentError> {
    if img.width() != CLEAN_SIZE || img.height() != CLEAN_SIZE || !img.is_gray() {
        return Err(AugmentError::Format { width: img.width(), height: img.height(), channels: img.channels() });
    }
    Ok(())
}

pub fn apply_augmentation(img: &Raster, tag: AugmentTag) -> Result<Raster, AugmentError> {
    check_format(img)?;
    Ok(match tag {
        AugmentTag::Rotation { degrees } => img.rotate(degrees as f64, &img.corner_fill_value()),
        AugmentTag::Brightness { percent } => img.adjust_brightness(AugmentTag::brightness_factor(percent))?,
    })
}

/// One database entry derived from a cleaned source image. `tag` is `None`
/// for the unmodified original.
#[derive(Clone, Debug, PartialEq)]
pub struct Augmented {
    pub source_id: String,
    pub tag: Option<AugmentTag>,
    pub image: Raster,
}

impl Augmented {
    /// `<source_id>_<tag>.pgm`, with `orig` for the original.
    pub fn file_name(&self) -> String {
        format!("{}_{}.pgm", self.source_id, tag_label(self.tag))
    }
}

/// Serialized form of an optional tag.
pub fn tag_label(tag: Option<AugmentTag>) -> String {
    tag.map_or_else(|| "orig".to_owned(), |t| t.to_string())
}

pub fn parse_tag_label(s: &str) -> Result<Option<AugmentTag>, AugmentError> {
    if s == "orig" {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

/// The original followed by every plan variant, in plan order.
pub fn expand(img: &Raster, source_id: &str) -> Result<Vec<Augmented>, AugmentError> {
    check_format(img)?;
    let variants: Vec<Raster> =
        augment_plan().into_par_iter().map(|tag| apply_augmentation(img, tag)).collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(FAN_OUT);
    out.push(Augmented { source_id: source_id.to_owned(), tag: None, image: img.clone() });
    out.extend(augment_plan().into_iter().zip(variants).map(|(tag, image)| Augmented {
        source_id: source_id.to_owned(),
        tag: Some(tag),
        image,
    }));
    Ok(out)
}

/// Expands every input; output order follows input order.
pub fn expand_all(inputs: &[(String, Raster)]) -> Result<Vec<Augmented>, AugmentError> {
    let nested: Vec<Vec<Augmented>> = inputs.par_iter().map(|(id, img)| expand(img, id)).collect::<Result<_, _>>()?;
    Ok(nested.into_iter().flatten().collect())
}
