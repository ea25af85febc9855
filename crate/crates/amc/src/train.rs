//! Mini-batch training with best-validation checkpointing.
//!
//! A batch is cut into fixed-size chunks that may run in parallel; their
//! gradients are summed in chunk order, so results do not depend on the
//! number of worker threads.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use amc_core::fifnet::{argmax, FifNet};
use amc_core::nn::{cross_entropy_batch, optimizer_step, OptimizerState, ParamSet, Scalar, Tensor4};
use amc_core::seed;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::TrainConfig;
use crate::dataset::{load_samples, Sample};
use crate::error::{HarnessError, IoContext, Result};
use crate::eval::predict_labels;
use crate::manifest::{Manifest, Split};

pub const LOG_FILE: &str = "train_log.csv";
pub const SETTINGS_FILE: &str = "train_settings.json";

const INIT_KEY: u64 = 0x1417;
const SHUFFLE_KEY: u64 = 0x5a0f;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub best_val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub log: Vec<EpochLog>,
    pub stop_reason: String,
}

pub fn log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,learning_rate,train_loss,train_accuracy,val_accuracy,best_val_accuracy\n");
    for e in log {
        writeln!(
            s,
            "{},{:e},{:.6},{:.6},{:.6},{:.6}",
            e.epoch, e.learning_rate, e.train_loss, e.train_accuracy, e.val_accuracy, e.best_val_accuracy
        )
        .unwrap();
    }
    s
}

#[derive(Serialize)]
struct Settings<'a> {
    train: &'a TrainConfig,
    classes: &'a [String],
    input_size: usize,
    param_count: usize,
    train_images: usize,
    val_images: usize,
}

struct ChunkResult {
    loss: f64,
    correct: usize,
    grads: ParamSet<f32>,
}

fn chunk_gradient(net: &FifNet, params: &ParamSet<f32>, chunk: &[&Sample], normalizer: f64) -> Result<ChunkResult> {
    let images: Vec<_> = chunk.iter().map(|s| &s.image).collect();
    let labels: Vec<usize> = chunk.iter().map(|s| s.label).collect();
    let x: Tensor4<f32> = net.batch(&images)?;
    let acts = net.graph.forward(params, &x)?;
    let logits = acts.output();
    let correct = (0..chunk.len())
        .filter(|&n| {
            let row: Vec<f64> = logits.sample(n).iter().map(|v| v.as_f64()).collect();
            argmax(&row) == labels[n]
        })
        .count();
    let (loss, grad) = cross_entropy_batch(logits, &labels, normalizer)?;
    let mut grads = ParamSet::zeros(net.graph.params());
    net.graph.backward(params, &acts, grad, &mut grads)?;
    Ok(ChunkResult { loss, correct, grads })
}

/// Trains `net` and returns the best-validation parameters.
///
/// With `out_dir` set, the checkpoint is rewritten at every improvement and
/// the CSV log after every epoch, so an abort leaves the last good model on
/// disk.
pub fn train_samples(
    net: &FifNet,
    classes: &[String],
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(HarnessError::Manifest("training needs non-empty train and val splits".into()));
    }
    if classes.len() != net.spec.num_classes {
        return Err(HarnessError::Config(format!(
            "{} class names for a {}-class network",
            classes.len(),
            net.spec.num_classes
        )));
    }
    let ckpt_path: Option<PathBuf> = out_dir.map(|d| d.join(&cfg.checkpoint_name));
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).at(dir)?;
        let settings = Settings {
            train: cfg,
            classes,
            input_size: net.spec.input_size,
            param_count: net.param_count(),
            train_images: train.len(),
            val_images: val.len(),
        };
        let p = dir.join(SETTINGS_FILE);
        fs::write(&p, serde_json::to_string_pretty(&settings).expect("settings serialize") + "\n").at(&p)?;
    }

    let mut params: ParamSet<f32> = net.graph.init_params(seed::derive(cfg.seed, &[INIT_KEY]));
    let mut state = OptimizerState::new(&params);
    let mut lr = cfg.learning_rate;
    let mut best: Option<(usize, f64, ParamSet<f32>)> = None;
    let mut stale = 0;
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stop_reason = format!("reached {} epochs", cfg.max_epochs);

    for epoch in 1..=cfg.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::rng(seed::derive(cfg.seed, &[SHUFFLE_KEY, epoch as u64])));
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for batch in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = batch.iter().map(|&i| &train[i]).collect();
            let normalizer = batch.len() as f64;
            let parts = batch
                .par_chunks(cfg.chunk_size)
                .map(|chunk| chunk_gradient(net, &params, chunk, normalizer))
                .collect::<Result<Vec<_>>>()?;
            let mut parts = parts.into_iter();
            let first = parts.next().expect("non-empty batch");
            let (mut batch_loss, mut grads) = (first.loss, first.grads);
            correct += first.correct;
            for p in parts {
                batch_loss += p.loss;
                correct += p.correct;
                grads.add_assign(&p.grads);
            }
            if !batch_loss.is_finite() {
                return Err(HarnessError::Diverged {
                    epoch,
                    reason: format!("loss is {batch_loss}"),
                });
            }
            loss_sum += batch_loss * normalizer;
            optimizer_step(&mut params, &grads, &mut state, &cfg.hyper(lr)).map_err(|e| HarnessError::Diverged {
                epoch,
                reason: e.to_string(),
            })?;
        }

        let predicted = predict_labels(net, &params, val)?;
        let val_correct = predicted.iter().zip(val).filter(|(p, s)| **p == s.label).count();
        let val_accuracy = val_correct as f64 / val.len() as f64;
        let improved = best.as_ref().is_none_or(|b| val_accuracy > b.1);
        if improved {
            if let Some(p) = &ckpt_path {
                Checkpoint {
                    classes: classes.to_vec(),
                    input_size: net.spec.input_size,
                    params: params.clone(),
                }
                .save(p)?;
            }
            best = Some((epoch, val_accuracy, params.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        let entry = EpochLog {
            epoch,
            learning_rate: lr,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            val_accuracy,
            best_val_accuracy: best.as_ref().map_or(0.0, |b| b.1),
        };
        on_epoch(&entry);
        log.push(entry);
        if let Some(dir) = out_dir {
            let p = dir.join(LOG_FILE);
            fs::write(&p, log_csv(&log)).at(&p)?;
        }

        if cfg.target_val_accuracy.is_some_and(|t| val_accuracy >= t) {
            stop_reason = format!("validation accuracy reached the target at epoch {epoch}");
            break;
        }
        if stale >= cfg.early_stop_patience {
            stop_reason = format!("no validation improvement for {stale} epochs");
            break;
        }
        if stale > 0 && stale % cfg.plateau_patience == 0 {
            lr *= cfg.lr_decay;
        }
    }

    let (best_epoch, best_val_accuracy, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            classes: classes.to_vec(),
            input_size: net.spec.input_size,
            params,
        },
        best_epoch,
        best_val_accuracy,
        log,
        stop_reason,
    })
}

/// Trains on the `train` split of a dataset directory, validating on `val`.
pub fn train(dataset_dir: &Path, cfg: &TrainConfig, out_dir: &Path, on_epoch: impl FnMut(&EpochLog)) -> Result<TrainOutcome> {
    let manifest = Manifest::load(dataset_dir)?;
    let train = load_samples(dataset_dir, manifest.records_in(Split::Train))?;
    let val = load_samples(dataset_dir, manifest.records_in(Split::Val))?;
    if train.is_empty() || val.is_empty() {
        return Err(HarnessError::Manifest(
            "the manifest has no train/val assignment; run `split` first".into(),
        ));
    }
    let net = FifNet::new(cfg.net_spec(manifest.header.config.image_size, manifest.num_classes()))?;
    train_samples(&net, &manifest.header.classes, &train, &val, cfg, Some(out_dir), on_epoch)
}
