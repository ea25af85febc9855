//! Dataset manifest: a JSON-lines file whose first line is a header holding
//! the generating config, followed by one record per image.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::DatasetConfig;
use crate::error::{HarnessError, IoContext, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Split {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| HarnessError::Split(format!("unknown split `{s}` (train, val, test)")))
    }
}

/// 64-bit seeds are written as hex strings so that JSON readers without
/// 64-bit integers keep them exact.
mod hex_u64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let text = String::deserialize(d)?;
        u64::from_str_radix(&text, 16).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub format_version: u32,
    pub classes: Vec<String>,
    /// How pixel intensities were formed; always [`RENDERING`] for datasets
    /// written by this crate.
    #[serde(default = "rendering_tag")]
    pub rendering: String,
    pub config: DatasetConfig,
}

/// Points in a pixel are averaged over that pixel's own count, then each
/// image is scaled by its own maximum.
pub const RENDERING: &str = "per-pixel-mean;per-image-max";

fn rendering_tag() -> String {
    RENDERING.into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRecord {
    /// Path relative to the dataset directory, `/`-separated.
    pub path: String,
    pub label: String,
    pub label_index: usize,
    pub snr_db: f64,
    pub frame_index: usize,
    #[serde(with = "hex_u64")]
    pub frame_seed: u64,
    /// SHA-256 of the channel taps.
    pub channel_digest: String,
    /// SHA-256 of the received symbol points; independent of image size.
    pub points_digest: String,
    /// SHA-256 of the PGM file.
    pub image_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub records: Vec<ImageRecord>,
}

/// Key of one `(format, snr)` cell; SNR in hundredths of a dB.
pub type CellKey = (usize, i64);

pub fn cell_key(r: &ImageRecord) -> CellKey {
    (r.label_index, (r.snr_db * 100.0).round() as i64)
}

impl Manifest {
    pub fn path_in(dir: &Path) -> PathBuf {
        dir.join(MANIFEST_FILE)
    }

    pub fn num_classes(&self) -> usize {
        self.header.classes.len()
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &ImageRecord> {
        self.records.iter().filter(move |r| r.split == Some(split))
    }

    /// Records grouped by `(format, snr)` cell, in manifest order.
    pub fn cells(&self) -> BTreeMap<CellKey, Vec<usize>> {
        let mut m: BTreeMap<CellKey, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            m.entry(cell_key(r)).or_default().push(i);
        }
        m
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = serde_json::to_string(&self.header).expect("header serializes");
        s.push('\n');
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str, origin: &Path) -> Result<Self> {
        let json_err = |source| HarnessError::Json {
            path: origin.into(),
            source,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let first = lines
            .next()
            .ok_or_else(|| HarnessError::Manifest(format!("{} is empty", origin.display())))?;
        let header: ManifestHeader = serde_json::from_str(first).map_err(json_err)?;
        if header.format_version != MANIFEST_VERSION {
            return Err(HarnessError::Manifest(format!(
                "format_version {} is not supported (expected {MANIFEST_VERSION})",
                header.format_version
            )));
        }
        let records = lines
            .map(|l| serde_json::from_str(l).map_err(json_err))
            .collect::<Result<Vec<ImageRecord>>>()?;
        let m = Self { header, records };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        for r in &self.records {
            if self.header.classes.get(r.label_index) != Some(&r.label) {
                return Err(HarnessError::Manifest(format!(
                    "{}: label `{}` does not match class index {}",
                    r.path, r.label, r.label_index
                )));
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = Self::path_in(dir);
        Self::from_jsonl(&fs::read_to_string(&path).at(&path)?, &path)
    }

    /// Writes through a temporary file and a rename, so a reader never sees a
    /// half-written manifest.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = Self::path_in(dir);
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        let mut f = fs::File::create(&tmp).at(&tmp)?;
        f.write_all(self.to_jsonl().as_bytes()).at(&tmp)?;
        f.sync_all().at(&tmp)?;
        fs::rename(&tmp, &path).at(&path)
    }
}
