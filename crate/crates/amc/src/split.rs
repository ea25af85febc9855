//! Stratified train/validation/test assignment.

use amc_core::seed;
use rand::seq::SliceRandom;

use crate::config::SplitConfig;
use crate::error::{HarnessError, Result};
use crate::manifest::{Manifest, Split};

/// Per-stratum counts for `n` items. Train and validation sizes are rounded;
/// test takes the remainder.
pub fn stratum_counts(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let share = |f: f64| ((n as f64) * f).round() as usize;
    let train = share(fractions[0]).min(n);
    let val = share(fractions[1]).min(n - train);
    [train, val, n - train - val]
}

/// Assigns every record a split, stratified by `(format, snr)`. Within each
/// stratum the records are shuffled with a seed derived from `cfg.seed` and
/// the stratum key, so the assignment is deterministic.
pub fn split_dataset(manifest: &Manifest, cfg: &SplitConfig) -> Result<Manifest> {
    cfg.validate()?;
    let mut out = manifest.clone();
    for ((label, snr), mut idx) in manifest.cells() {
        let counts = stratum_counts(idx.len(), cfg.fractions);
        for (k, (&c, &f)) in counts.iter().zip(&cfg.fractions).enumerate() {
            if f > 0.0 && c == 0 {
                return Err(HarnessError::Split(format!(
                    "{} split is empty for stratum ({}, {} dB) of {} images",
                    Split::ALL[k],
                    manifest.header.classes[label],
                    snr as f64 / 100.0,
                    idx.len()
                )));
            }
        }
        idx.sort_by_key(|&i| manifest.records[i].frame_index);
        let mut rng = seed::rng(seed::derive(cfg.seed, &[label as u64, snr as u64]));
        idx.shuffle(&mut rng);
        let mut it = idx.into_iter();
        for (split, count) in Split::ALL.into_iter().zip(counts) {
            for i in it.by_ref().take(count) {
                out.records[i].split = Some(split);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DatasetConfig;
    use crate::manifest::{ImageRecord, ManifestHeader, MANIFEST_VERSION, RENDERING};
    use std::collections::HashSet;

    fn manifest(per_cell: usize) -> Manifest {
        let mut records = Vec::new();
        for label in 0..2 {
            for snr in [0.0, 10.0] {
                for i in 0..per_cell {
                    records.push(ImageRecord {
                        path: format!("{label}/{snr}/{i}.pgm"),
                        label: ["A", "B"][label].into(),
                        label_index: label,
                        snr_db: snr,
                        frame_index: i,
                        frame_seed: i as u64,
                        channel_digest: String::new(),
                        points_digest: String::new(),
                        image_sha256: String::new(),
                        split: None,
                    });
                }
            }
        }
        Manifest {
            header: ManifestHeader {
                format_version: MANIFEST_VERSION,
                rendering: RENDERING.into(),
                classes: vec!["A".into(), "B".into()],
                config: DatasetConfig::default(),
            },
            records,
        }
    }

    fn cfg(seed: u64) -> SplitConfig {
        SplitConfig {
            fractions: [0.8, 0.1, 0.1],
            seed,
        }
    }

    #[test]
    fn stratified_counts() {
        let m = split_dataset(&manifest(100), &cfg(1)).unwrap();
        for (_, idx) in m.cells() {
            let count = |s| idx.iter().filter(|&&i| m.records[i].split == Some(s)).count();
            assert_eq!([count(Split::Train), count(Split::Val), count(Split::Test)], [80, 10, 10]);
        }
        assert_eq!(stratum_counts(400, [0.75, 0.125, 0.125]), [300, 50, 50]);
    }

    #[test]
    fn partition_and_seed_dependence() {
        let a = split_dataset(&manifest(100), &cfg(1)).unwrap();
        let b = split_dataset(&manifest(100), &cfg(2)).unwrap();
        let again = split_dataset(&manifest(100), &cfg(1)).unwrap();
        assert_eq!(a, again);
        assert_ne!(a, b);
        assert!(a.records.iter().all(|r| r.split.is_some()));
        let sets: Vec<HashSet<&str>> = Split::ALL
            .iter()
            .map(|&s| a.records_in(s).map(|r| r.path.as_str()).collect())
            .collect();
        assert_eq!(sets.iter().map(HashSet::len).sum::<usize>(), a.records.len());
        assert!(sets[0].is_disjoint(&sets[1]) && sets[1].is_disjoint(&sets[2]) && sets[0].is_disjoint(&sets[2]));
        for s in Split::ALL {
            assert_eq!(a.records_in(s).count(), b.records_in(s).count());
        }
    }

    #[test]
    fn degenerate_strata_are_rejected() {
        assert!(split_dataset(&manifest(3), &cfg(1)).is_err());
        let c = SplitConfig {
            fractions: [0.6, 0.6, -0.2],
            seed: 1,
        };
        assert!(split_dataset(&manifest(100), &c).is_err());
        let whole = SplitConfig {
            fractions: [1.0, 0.0, 0.0],
            seed: 1,
        };
        let m = split_dataset(&manifest(3), &whole).unwrap();
        assert_eq!(m.records_in(Split::Train).count(), 12);
    }
}
