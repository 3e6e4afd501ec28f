use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::label::{CLASS6_NAMES, NUM_CLASSES6};
use super::manifest::{ManifestRecord, Split};
use super::DatasetError;

/// Fraction of records held out for testing by default.
pub const DEFAULT_TEST_FRACTION: f64 = 0.33;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Every descendant of one source image lands on the same side.
    #[default]
    Grouped,
    /// Each record is assigned independently.
    RecordRandom,
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::Grouped => "grouped",
            SplitMode::RecordRandom => "record-random",
        })
    }
}

impl FromStr for SplitMode {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grouped" => Ok(SplitMode::Grouped),
            "record-random" => Ok(SplitMode::RecordRandom),
            other => Err(DatasetError::Label(format!("unknown split mode {other:?}"))),
        }
    }
}

/// `round(n · fraction)` with halves rounded up. The small epsilon absorbs
/// binary representation error in fractions like 0.33.
pub fn test_count(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction + 0.5 + 1e-9).floor() as usize
}

/// Assigns train/test, stratified by 6-class label. The result depends only
/// on the manifest contents, `fraction`, `seed` and `mode`.
pub fn split(
    manifest: &[ManifestRecord],
    fraction: f64,
    seed: u64,
    mode: SplitMode,
) -> Result<Vec<ManifestRecord>, DatasetError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DatasetError::Fraction(fraction));
    }
    if manifest.is_empty() {
        return Err(DatasetError::EmptyManifest);
    }
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES6];
    for (i, r) in manifest.iter().enumerate() {
        strata[r.class6()].push(i);
    }
    if let Some(class) = strata.iter().position(Vec::is_empty) {
        return Err(DatasetError::EmptyClass(CLASS6_NAMES[class].to_owned()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<ManifestRecord> = manifest.to_vec();
    for members in &strata {
        // canonical order first, so input order does not leak into the result
        let mut members = members.clone();
        members.sort_by(|&a, &b| manifest[a].path.cmp(&manifest[b].path));
        let target = test_count(members.len(), fraction);
        match mode {
            SplitMode::RecordRandom => {
                members.shuffle(&mut rng);
                for (k, &i) in members.iter().enumerate() {
                    out[i].split = if k < target { Split::Test } else { Split::Train };
                }
            }
            SplitMode::Grouped => {
                let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
                for &i in &members {
                    groups.entry(&manifest[i].source_image_id).or_default().push(i);
                }
                let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
                groups.shuffle(&mut rng);
                let mut taken = 0usize;
                for group in groups {
                    // take a group when doing so moves the count no further from the target
                    let with = (taken + group.len()).abs_diff(target);
                    let side = if taken < target && with <= target - taken {
                        taken += group.len();
                        Split::Test
                    } else {
                        Split::Train
                    };
                    for i in group {
                        out[i].split = side;
                    }
                }
            }
        }
    }
    Ok(out)
}
