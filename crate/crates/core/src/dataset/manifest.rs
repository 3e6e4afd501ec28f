use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use walkdir::WalkDir;

use super::label::{CoinLabel, Denomination, Side};
use super::DatasetError;
use crate::augment::{parse_tag_label, tag_label, AugmentTag};

pub const MANIFEST_HEADER: &str =
    "path\tclass6\tdenomination\tside\tstyle\tcoin_id\tsource_image_id\taugment_tag\tsplit";

/// Sidecar written next to augmented images, one line per output file.
pub const PROVENANCE_FILE: &str = "provenance.tsv";
pub const PROVENANCE_HEADER: &str = "path\tsource_image_id\taugment_tag";

pub const IMAGE_EXTENSIONS: [&str; 6] = ["pgm", "ppm", "pnm", "png", "jpg", "jpeg"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Unassigned,
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Unassigned => "unassigned",
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unassigned" => Ok(Split::Unassigned),
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(DatasetError::Label(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRecord {
    /// Relative to the manifest root, `/`-separated.
    pub path: String,
    pub label: CoinLabel,
    pub source_image_id: String,
    pub coin_id: String,
    pub augment_tag: Option<AugmentTag>,
    pub split: Split,
}

impl ManifestRecord {
    pub fn class6(&self) -> usize {
        self.label.class6()
    }
}

pub type Manifest = Vec<ManifestRecord>;

/// A file the directory scan could not label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathIssue {
    pub path: PathBuf,
    pub reason: String,
}

impl fmt::Display for PathIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.reason)
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Splits a file stem into the source stem and its augmentation tag.
/// Stems without a recognizable `_<tag>` suffix are originals.
fn split_stem(stem: &str) -> (&str, Option<AugmentTag>) {
    if let Some((head, tail)) = stem.rsplit_once('_') {
        if !head.is_empty() {
            if let Ok(tag) = parse_tag_label(tail) {
                return (head, tag);
            }
        }
    }
    (stem, None)
}

/// Labels one image from its path relative to the root:
/// `<rupees>/<side>/<style>/<coin>[-<shot>][_<tag>].<ext>`.
pub fn record_for_path(rel: &Path) -> Result<ManifestRecord, String> {
    let parts: Vec<&str> =
        rel.components().map(|c| c.as_os_str().to_str().ok_or("path is not UTF-8")).collect::<Result<_, _>>()?;
    let [denom, side, style, file] = parts.as_slice() else {
        return Err(format!("expected <denomination>/<side>/<style>/<file>, got {} components", parts.len()));
    };
    let denomination = denom
        .parse::<u8>()
        .ok()
        .and_then(Denomination::from_rupees)
        .ok_or_else(|| format!("unknown denomination directory {denom:?}"))?;
    let side: Side = side.parse().map_err(|e: DatasetError| e.to_string())?;
    let style: u8 = style.parse().map_err(|_| format!("style directory {style:?} is not a number"))?;
    let label = CoinLabel::new(denomination, side, style).map_err(|e| e.to_string())?;
    let stem =
        Path::new(file).file_stem().and_then(|s| s.to_str()).filter(|s| !s.is_empty()).ok_or("empty file stem")?;
    if stem.contains('\t') {
        return Err("file name contains a tab".into());
    }
    let (source_stem, augment_tag) = split_stem(stem);
    let coin = source_stem.split('-').next().unwrap_or(source_stem);
    Ok(ManifestRecord {
        path: parts.join("/"),
        label,
        source_image_id: format!("{}/{}/{}/{}", denom, side, style, source_stem),
        coin_id: format!("{}/{}/{}", denom, style, coin),
        augment_tag,
        split: Split::Unassigned,
    })
}

/// Scans `root` for images laid out as `<rupees>/<side>/<style>/<file>`.
/// Every file that cannot be labeled is reported; none are skipped silently.
pub fn build_manifest(root: &Path) -> Result<Manifest, DatasetError> {
    let mut records = Vec::new();
    let mut issues = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| DatasetError::Io(e.into()))?;
        if !entry.file_type().is_file() || !is_image(entry.path()) {
            continue;
        }
        let rel = entry.path().strip_prefix(root).expect("walk stays under root");
        match record_for_path(rel) {
            Ok(r) => records.push(r),
            Err(reason) => issues.push(PathIssue { path: rel.to_path_buf(), reason }),
        }
    }
    if !issues.is_empty() {
        return Err(DatasetError::Unparseable(issues));
    }
    records.sort_by(|a, b| a.path.cmp(&b.path));
    check_consistency(&records)?;
    let sidecar = root.join(PROVENANCE_FILE);
    if sidecar.is_file() {
        verify_provenance(&records, &read_provenance(&sidecar)?)?;
    }
    Ok(records)
}

/// Records sharing a source image must agree on label and coin; paths are unique.
pub fn check_consistency(records: &[ManifestRecord]) -> Result<(), DatasetError> {
    let mut paths = HashSet::new();
    let mut sources: BTreeMap<&str, (&CoinLabel, &str)> = BTreeMap::new();
    for r in records {
        if !paths.insert(r.path.as_str()) {
            return Err(DatasetError::Inconsistent(format!("duplicate path {}", r.path)));
        }
        let entry = sources.entry(&r.source_image_id).or_insert((&r.label, &r.coin_id));
        if entry.0 != &r.label || entry.1 != r.coin_id {
            return Err(DatasetError::Inconsistent(format!(
                "source image {} has conflicting label or coin",
                r.source_image_id
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProvenanceEntry {
    pub path: String,
    pub source_image_id: String,
    pub augment_tag: Option<AugmentTag>,
}

pub fn write_provenance(entries: &[ProvenanceEntry], path: &Path) -> Result<(), DatasetError> {
    let mut out = String::from(PROVENANCE_HEADER);
    out.push('\n');
    for e in entries {
        out.push_str(&format!("{}\t{}\t{}\n", e.path, e.source_image_id, tag_label(e.augment_tag)));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_provenance(path: &Path) -> Result<Vec<ProvenanceEntry>, DatasetError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == PROVENANCE_HEADER => {}
        _ => return Err(DatasetError::Malformed { line: 1, reason: "bad provenance header".into() }),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let fields: Vec<&str> = l.split('\t').collect();
            let malformed = |reason: String| DatasetError::Malformed { line: i + 1, reason };
            let [p, s, t] = fields.as_slice() else {
                return Err(malformed(format!("expected 3 fields, got {}", fields.len())));
            };
            Ok(ProvenanceEntry {
                path: p.to_string(),
                source_image_id: s.to_string(),
                augment_tag: parse_tag_label(t).map_err(|e| malformed(e.to_string()))?,
            })
        })
        .collect()
}

fn verify_provenance(records: &[ManifestRecord], entries: &[ProvenanceEntry]) -> Result<(), DatasetError> {
    let listed: BTreeMap<&str, &ProvenanceEntry> = entries.iter().map(|e| (e.path.as_str(), e)).collect();
    if listed.len() != records.len() {
        return Err(DatasetError::Inconsistent(format!(
            "provenance lists {} files, directory holds {}",
            listed.len(),
            records.len()
        )));
    }
    for r in records {
        match listed.get(r.path.as_str()) {
            Some(e) if e.source_image_id == r.source_image_id && e.augment_tag == r.augment_tag => {}
            Some(_) => return Err(DatasetError::Inconsistent(format!("provenance disagrees for {}", r.path))),
            None => return Err(DatasetError::Inconsistent(format!("{} missing from provenance", r.path))),
        }
    }
    Ok(())
}

fn check_field(value: &str) -> Result<&str, DatasetError> {
    if value.contains(['\t', '\n', '\r']) {
        return Err(DatasetError::Inconsistent(format!("field {value:?} contains a separator")));
    }
    Ok(value)
}

pub fn manifest_to_string(manifest: &[ManifestRecord]) -> Result<String, DatasetError> {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for r in manifest {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            check_field(&r.path)?,
            r.label.class6(),
            r.label.denomination.rupees(),
            r.label.side,
            r.label.style,
            check_field(&r.coin_id)?,
            check_field(&r.source_image_id)?,
            tag_label(r.augment_tag),
            r.split,
        ));
    }
    Ok(out)
}

pub fn parse_manifest(text: &str) -> Result<Manifest, DatasetError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == MANIFEST_HEADER => {}
        _ => return Err(DatasetError::Malformed { line: 1, reason: "missing or wrong header".into() }),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let malformed = |reason: String| DatasetError::Malformed { line: i + 1, reason };
        let f: Vec<&str> = line.split('\t').collect();
        let [path, class6, denom, side, style, coin_id, source, tag, split] = f.as_slice() else {
            return Err(malformed(format!("expected 9 fields, got {}", f.len())));
        };
        let denomination = denom
            .parse::<u8>()
            .ok()
            .and_then(Denomination::from_rupees)
            .ok_or_else(|| malformed(format!("bad denomination {denom:?}")))?;
        let side: Side = side.parse().map_err(|e: DatasetError| malformed(e.to_string()))?;
        let style: u8 = style.parse().map_err(|_| malformed(format!("bad style {style:?}")))?;
        let label = CoinLabel::new(denomination, side, style).map_err(|e| malformed(e.to_string()))?;
        if class6.parse::<usize>().ok() != Some(label.class6()) {
            return Err(malformed(format!("class6 {class6:?} disagrees with denomination and side")));
        }
        out.push(ManifestRecord {
            path: path.to_string(),
            label,
            source_image_id: source.to_string(),
            coin_id: coin_id.to_string(),
            augment_tag: parse_tag_label(tag).map_err(|e| malformed(e.to_string()))?,
            split: split.parse().map_err(|e: DatasetError| malformed(e.to_string()))?,
        });
    }
    Ok(out)
}

pub fn write_manifest(manifest: &[ManifestRecord], path: &Path) -> Result<(), DatasetError> {
    fs::write(path, manifest_to_string(manifest)?)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest, DatasetError> {
    parse_manifest(&fs::read_to_string(path)?)
}
