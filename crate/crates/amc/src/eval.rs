//! Accuracy tables and confusion matrices.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use amc_core::fifnet::{argmax, FifNet};
use amc_core::nn::ParamSet;
use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::dataset::{load_samples, sha256_hex, Sample};
use crate::error::{HarnessError, IoContext, Result};
use crate::manifest::{Manifest, Split};

/// Images per inference pass.
pub const EVAL_CHUNK: usize = 32;

/// Arg-max predictions, in sample order.
pub fn predict_labels(net: &FifNet, params: &ParamSet<f32>, samples: &[Sample]) -> Result<Vec<usize>> {
    let chunks: Vec<Vec<usize>> = samples
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| -> Result<Vec<usize>> {
            let images: Vec<_> = chunk.iter().map(|s| &s.image).collect();
            let logits = net.forward(params, &images)?;
            Ok((0..chunk.len())
                .map(|n| {
                    let row: Vec<f64> = logits.sample(n).iter().map(|&v| f64::from(v)).collect();
                    argmax(&row)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(chunks.concat())
}

/// One labelled prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub truth: usize,
    pub predicted: usize,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnrRow {
    pub snr_db: f64,
    pub class_correct: Vec<usize>,
    pub class_total: Vec<usize>,
}

impl SnrRow {
    pub fn correct(&self) -> usize {
        self.class_correct.iter().sum()
    }

    pub fn total(&self) -> usize {
        self.class_total.iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.correct(), self.total())
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub classes: Vec<String>,
    /// Rows are the true class, columns the prediction.
    pub confusion: Vec<Vec<usize>>,
    /// Ascending SNR.
    pub by_snr: Vec<SnrRow>,
    /// `(name, sha256)` of the inputs that produced the report.
    pub digests: Vec<(String, String)>,
}

impl EvalReport {
    pub fn from_outcomes(classes: &[String], outcomes: &[Outcome]) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(HarnessError::Manifest("nothing to evaluate: the split is empty".into()));
        }
        let k = classes.len();
        let mut confusion = vec![vec![0usize; k]; k];
        let mut snrs: Vec<f64> = Vec::new();
        for o in outcomes {
            if o.truth >= k || o.predicted >= k {
                return Err(amc_core::Error::LabelOutOfRange {
                    label: o.truth.max(o.predicted),
                    classes: k,
                }
                .into());
            }
            confusion[o.truth][o.predicted] += 1;
            if !snrs.contains(&o.snr_db) {
                snrs.push(o.snr_db);
            }
        }
        snrs.sort_by(f64::total_cmp);
        let by_snr = snrs
            .into_iter()
            .map(|snr| {
                let mut row = SnrRow {
                    snr_db: snr,
                    class_correct: vec![0; k],
                    class_total: vec![0; k],
                };
                for o in outcomes.iter().filter(|o| o.snr_db == snr) {
                    row.class_total[o.truth] += 1;
                    row.class_correct[o.truth] += usize::from(o.truth == o.predicted);
                }
                row
            })
            .collect();
        Ok(Self {
            classes: classes.to_vec(),
            confusion,
            by_snr,
            digests: Vec::new(),
        })
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn overall_accuracy(&self) -> f64 {
        let correct: usize = (0..self.classes.len()).map(|i| self.confusion[i][i]).sum();
        ratio(correct, self.total())
    }

    pub fn class_accuracy(&self, class: usize) -> f64 {
        ratio(self.confusion[class][class], self.confusion[class].iter().sum())
    }

    pub fn accuracy_at(&self, snr_db: f64) -> Option<f64> {
        self.by_snr.iter().find(|r| r.snr_db == snr_db).map(SnrRow::accuracy)
    }

    pub fn accuracy_by_snr_csv(&self) -> String {
        let mut s = String::from("snr_db,accuracy,count");
        for c in &self.classes {
            write!(s, ",{c}").unwrap();
        }
        s.push('\n');
        for r in &self.by_snr {
            write!(s, "{},{:.6},{}", r.snr_db, r.accuracy(), r.total()).unwrap();
            for (&c, &t) in r.class_correct.iter().zip(&r.class_total) {
                write!(s, ",{:.6}", ratio(c, t)).unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn confusion_csv(&self) -> String {
        let mut s = String::from("truth\\predicted");
        for c in &self.classes {
            write!(s, ",{c}").unwrap();
        }
        s.push('\n');
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            s.push_str(c);
            for v in row {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn per_class_csv(&self) -> String {
        let mut s = String::from("class,correct,count,accuracy\n");
        for (i, c) in self.classes.iter().enumerate() {
            let total: usize = self.confusion[i].iter().sum();
            writeln!(s, "{c},{},{total},{:.6}", self.confusion[i][i], self.class_accuracy(i)).unwrap();
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        writeln!(s, "images: {}", self.total()).unwrap();
        writeln!(s, "overall accuracy: {:.4}", self.overall_accuracy()).unwrap();
        for r in &self.by_snr {
            writeln!(s, "  {:+6.1} dB: {:.4} ({} images)", r.snr_db, r.accuracy(), r.total()).unwrap();
        }
        for (i, c) in self.classes.iter().enumerate() {
            writeln!(s, "  {c:>7}: {:.4}", self.class_accuracy(i)).unwrap();
        }
        for (name, d) in &self.digests {
            writeln!(s, "{name} sha256: {d}").unwrap();
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).at(dir)?;
        for (name, body) in [
            ("accuracy_by_snr.csv", self.accuracy_by_snr_csv()),
            ("confusion.csv", self.confusion_csv()),
            ("per_class.csv", self.per_class_csv()),
            ("summary.txt", self.summary()),
        ] {
            let p = dir.join(name);
            fs::write(&p, body).at(&p)?;
        }
        Ok(())
    }
}

/// Evaluates `checkpoint` on one split of the dataset in `dataset_dir`.
pub fn evaluate(checkpoint: &Checkpoint, dataset_dir: &Path, split: Split) -> Result<EvalReport> {
    let manifest = Manifest::load(dataset_dir)?;
    if checkpoint.classes != manifest.header.classes {
        return Err(HarnessError::Checkpoint(format!(
            "checkpoint classes {:?} differ from dataset classes {:?}",
            checkpoint.classes, manifest.header.classes
        )));
    }
    let net = checkpoint.default_network()?;
    let samples = load_samples(dataset_dir, manifest.records_in(split))?;
    if samples.is_empty() {
        return Err(HarnessError::Manifest(format!("the {split} split is empty")));
    }
    let predicted = predict_labels(&net, &checkpoint.params, &samples)?;
    let outcomes: Vec<Outcome> = samples
        .iter()
        .zip(predicted)
        .map(|(s, p)| Outcome {
            truth: s.label,
            predicted: p,
            snr_db: s.snr_db,
        })
        .collect();
    let mut report = EvalReport::from_outcomes(&manifest.header.classes, &outcomes)?;
    let config_json = serde_json::to_string(&manifest.header.config).expect("config serializes");
    report.digests = vec![
        ("dataset config".into(), sha256_hex(config_json.as_bytes())),
        ("checkpoint".into(), sha256_hex(&checkpoint.encode())),
    ];
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use amc_core::seed;
    use rand::Rng;

    fn classes(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("C{i}")).collect()
    }

    fn balanced(k: usize, per: usize) -> Vec<(usize, f64)> {
        let mut v = Vec::new();
        for c in 0..k {
            for i in 0..per {
                v.push((c, if i % 2 == 0 { 0.0 } else { 10.0 }));
            }
        }
        v
    }

    #[test]
    fn perfect_predictor_gives_identity() {
        let data = balanced(8, 20);
        let outcomes: Vec<Outcome> = data
            .iter()
            .map(|&(t, s)| Outcome {
                truth: t,
                predicted: t,
                snr_db: s,
            })
            .collect();
        let r = EvalReport::from_outcomes(&classes(8), &outcomes).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(r.confusion[i][j], if i == j { 20 } else { 0 });
            }
        }
        assert_eq!(r.overall_accuracy(), 1.0);
        assert_eq!(r.by_snr.len(), 2);
        assert!(r.confusion_csv().starts_with("truth\\predicted,C0,C1"));
    }

    #[test]
    fn random_predictor_sits_at_chance() {
        let data = balanced(8, 2000);
        let mut rng = seed::rng(3);
        let outcomes: Vec<Outcome> = data
            .iter()
            .map(|&(t, s)| Outcome {
                truth: t,
                predicted: rng.random_range(0..8),
                snr_db: s,
            })
            .collect();
        let r = EvalReport::from_outcomes(&classes(8), &outcomes).unwrap();
        let n = outcomes.len() as f64;
        let sigma = (0.125 * 0.875 / n).sqrt();
        assert!((r.overall_accuracy() - 0.125).abs() < 4.0 * sigma, "{}", r.overall_accuracy());
        for (i, row) in r.confusion.iter().enumerate() {
            assert_eq!(row.iter().sum::<usize>(), 2000, "row {i}");
        }
        for row in &r.by_snr {
            assert!((0.0..=1.0).contains(&row.accuracy()));
        }
    }

    #[test]
    fn empty_and_out_of_range_are_rejected() {
        assert!(EvalReport::from_outcomes(&classes(2), &[]).is_err());
        let bad = [Outcome {
            truth: 0,
            predicted: 5,
            snr_db: 0.0,
        }];
        assert!(EvalReport::from_outcomes(&classes(2), &bad).is_err());
    }
}
