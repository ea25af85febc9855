//! Image-size ablation over datasets that share every frame.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::Config;
use crate::dataset::gen_dataset;
use crate::error::{HarnessError, IoContext, Result};
use crate::eval::{evaluate, EvalReport};
use crate::manifest::{Manifest, Split};
use crate::split::split_dataset;
use crate::train::{train, EpochLog};

/// Fails unless every manifest lists the same frames with the same seeds and
/// identical received symbol points.
pub fn check_paired(manifests: &[&Manifest]) -> Result<()> {
    let Some((first, rest)) = manifests.split_first() else {
        return Ok(());
    };
    for m in rest {
        if m.records.len() != first.records.len() || m.header.classes != first.header.classes {
            return Err(HarnessError::Ablation("datasets list different frames".into()));
        }
        for (a, b) in first.records.iter().zip(&m.records) {
            if a.frame_seed != b.frame_seed || a.label_index != b.label_index || a.snr_db != b.snr_db {
                return Err(HarnessError::Ablation(format!(
                    "frame seed mismatch: {} vs {}",
                    a.path, b.path
                )));
            }
            if a.points_digest != b.points_digest {
                return Err(HarnessError::Ablation(format!(
                    "{}: same seed but different symbol points",
                    a.path
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    /// `(image size, test report)`, in the requested order.
    pub runs: Vec<(usize, EvalReport)>,
}

impl AblationReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("snr_db");
        for (size, _) in &self.runs {
            write!(s, ",accuracy_{size}").unwrap();
        }
        s.push('\n');
        let Some((_, first)) = self.runs.first() else {
            return s;
        };
        for row in &first.by_snr {
            write!(s, "{}", row.snr_db).unwrap();
            for (_, r) in &self.runs {
                write!(s, ",{:.6}", r.accuracy_at(row.snr_db).unwrap_or(f64::NAN)).unwrap();
            }
            s.push('\n');
        }
        s.push_str("overall");
        for (_, r) in &self.runs {
            write!(s, ",{:.6}", r.overall_accuracy()).unwrap();
        }
        s.push('\n');
        s
    }
}

/// Generates, splits, trains and evaluates one dataset per image size, all
/// from the frames of `base`.
pub fn ablate_sizes(
    base: &Config,
    sizes: &[usize],
    out_dir: &Path,
    mut on_epoch: impl FnMut(usize, &EpochLog),
) -> Result<AblationReport> {
    base.validate()?;
    if sizes.is_empty() {
        return Err(HarnessError::Ablation("no image sizes given".into()));
    }
    let mut manifests = Vec::new();
    for &size in sizes {
        let mut ds = base.dataset.clone();
        ds.image_size = size;
        let dir = out_dir.join(format!("size{size}"));
        let data = dir.join("data");
        let generated = gen_dataset(&ds, &data)?;
        let split = split_dataset(&generated.manifest, &base.split)?;
        split.save(&data)?;
        manifests.push((size, dir, split));
    }
    check_paired(&manifests.iter().map(|(_, _, m)| m).collect::<Vec<_>>())?;

    let mut runs = Vec::new();
    for (size, dir, _) in &manifests {
        let data = dir.join("data");
        let outcome = train(&data, &base.train, &dir.join("model"), |e| on_epoch(*size, e))?;
        let report = evaluate(&outcome.checkpoint, &data, Split::Test)?;
        report.write(&dir.join("eval"))?;
        runs.push((*size, report));
    }
    let report = AblationReport { runs };
    let p = out_dir.join("ablation.csv");
    fs::write(&p, report.csv()).at(&p)?;
    Ok(report)
}
