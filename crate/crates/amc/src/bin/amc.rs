//! `amc`: dataset generation, training and evaluation for constellation-image
//! modulation classification.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use amc::ablation::ablate_sizes;
use amc::checkpoint::Checkpoint;
use amc::classify::classify;
use amc::config::{Config, OptimizerName};
use amc::dataset::{gen_dataset, verify};
use amc::eval::evaluate;
use amc::manifest::{Manifest, Split};
use amc::split::split_dataset;
use amc::train::{train, EpochLog};
use amc_core::fifnet::FifNet;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "amc", version, about = "Constellation-image modulation classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file; missing fields take their defaults.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Use the built-in four-class desk-scale config as the base.
    #[arg(long, conflicts_with = "config")]
    desk: bool,
    /// Overrides the seed of the stage being run.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<Config> {
        let cfg = match (&self.config, self.desk) {
            (Some(p), _) => Config::load(p).with_context(|| format!("loading {}", p.display()))?,
            (None, true) => Config::desk(),
            (None, false) => Config::default(),
        };
        Ok(cfg)
    }
}

#[derive(Args, Clone, Default)]
struct TrainFlags {
    /// Maximum number of epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// Initial learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Mini-batch size
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_parser = ["sgd", "adam"])]
    optimizer: Option<String>,
    /// Stop once validation accuracy reaches this value.
    #[arg(long)]
    target_val_accuracy: Option<f64>,
}

impl TrainFlags {
    fn apply(&self, cfg: &mut Config) {
        let t = &mut cfg.train;
        if let Some(v) = self.epochs {
            t.max_epochs = v;
        }
        if let Some(v) = self.lr {
            t.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = &self.optimizer {
            t.optimizer = if v == "adam" { OptimizerName::Adam } else { OptimizerName::Sgd };
        }
        if self.target_val_accuracy.is_some() {
            t.target_val_accuracy = self.target_val_accuracy;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize, render and write a dataset of PGM images plus manifest.
    GenDataset {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Image side length in pixels
        #[arg(long)]
        image_size: Option<usize>,
        /// Frames per (format, SNR) cell
        #[arg(long)]
        frames: Option<usize>,
        /// Symbols per frame
        #[arg(long)]
        symbols: Option<usize>,
        /// Comma-separated SNR list in dB.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snr: Option<Vec<f64>>,
        /// Comma-separated format names.
        #[arg(long, value_delimiter = ',')]
        formats: Option<Vec<String>>,
    },
    /// Assign stratified train/val/test splits to a dataset manifest.
    Split {
        #[command(flatten)]
        common: Common,
        /// Dataset directory
        #[arg(long)]
        dataset: PathBuf,
        /// Train, val and test fractions.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        fractions: Option<Vec<f64>>,
    },
    /// Train FiF-Net on the train split, keeping the best validation model.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory
        #[arg(long)]
        dataset: PathBuf,
        /// Directory for the checkpoint and training log.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Evaluate a checkpoint and write CSV reports.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Dataset directory
        #[arg(long)]
        dataset: PathBuf,
        /// Checkpoint file
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate one model per image size on shared frames.
    AblateSize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "25,50,100,200")]
        sizes: Vec<usize>,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Classify one PGM image; prints JSON.
    Classify {
        #[command(flatten)]
        common: Common,
        /// Checkpoint file
        #[arg(long)]
        checkpoint: PathBuf,
        /// PGM image to classify
        image: PathBuf,
    },
    /// Re-hash every image of a dataset against its manifest.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Dataset directory
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Print the layer graph of a network.
    Graph {
        #[command(flatten)]
        common: Common,
        /// Input side length in pixels
        #[arg(long, default_value_t = 200)]
        image_size: usize,
        /// Number of output classes
        #[arg(long, default_value_t = 8)]
        classes: usize,
    },
}

fn print_epoch(prefix: &str, e: &EpochLog, started: Instant) {
    eprintln!(
        "{prefix}epoch {:>3}  lr {:.1e}  loss {:.4}  train {:.4}  val {:.4}  best {:.4}  ({:.0}s)",
        e.epoch,
        e.learning_rate,
        e.train_loss,
        e.train_accuracy,
        e.val_accuracy,
        e.best_val_accuracy,
        started.elapsed().as_secs_f64()
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenDataset {
            common,
            out,
            image_size,
            frames,
            symbols,
            snr,
            formats,
        } => {
            let mut cfg = common.load()?;
            let d = &mut cfg.dataset;
            if let Some(s) = common.seed {
                d.master_seed = s;
            }
            if let Some(v) = image_size {
                d.image_size = v;
            }
            if let Some(v) = frames {
                d.frames_per_class_per_snr = v;
            }
            if let Some(v) = symbols {
                d.symbols_per_frame = v;
            }
            if let Some(v) = snr {
                d.snr_list_db = v;
            }
            if let Some(v) = formats {
                d.formats = v;
            }
            cfg.validate()?;
            let t = Instant::now();
            let report = gen_dataset(&cfg.dataset, &out)?;
            eprintln!(
                "{} images ({} written, {} unchanged) in {:.1}s",
                report.manifest.records.len(),
                report.written,
                report.unchanged,
                t.elapsed().as_secs_f64()
            );
        }
        Command::Split {
            common,
            dataset,
            fractions,
        } => {
            let mut cfg = common.load()?;
            if let Some(s) = common.seed {
                cfg.split.seed = s;
            }
            if let Some(f) = fractions {
                cfg.split.fractions = [f[0], f[1], f[2]];
            }
            let manifest = Manifest::load(&dataset)?;
            let split = split_dataset(&manifest, &cfg.split)?;
            split.save(&dataset)?;
            for s in Split::ALL {
                eprintln!("{s}: {}", split.records_in(s).count());
            }
        }
        Command::Train {
            common,
            dataset,
            out,
            flags,
        } => {
            let mut cfg = common.load()?;
            if let Some(s) = common.seed {
                cfg.train.seed = s;
            }
            flags.apply(&mut cfg);
            cfg.validate()?;
            let t = Instant::now();
            let outcome = train(&dataset, &cfg.train, &out, |e| print_epoch("", e, t))?;
            eprintln!(
                "best val accuracy {:.4} at epoch {} ({})",
                outcome.best_val_accuracy, outcome.best_epoch, outcome.stop_reason
            );
        }
        Command::Eval {
            common: _,
            dataset,
            checkpoint,
            split,
            out,
        } => {
            let split: Split = split.parse()?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let report = evaluate(&ckpt, &dataset, split)?;
            report.write(&out)?;
            print!("{}", report.summary());
        }
        Command::AblateSize {
            common,
            out,
            sizes,
            flags,
        } => {
            let mut cfg = common.load()?;
            if let Some(s) = common.seed {
                cfg.dataset.master_seed = s;
            }
            flags.apply(&mut cfg);
            let t = Instant::now();
            let report = ablate_sizes(&cfg, &sizes, &out, |size, e| print_epoch(&format!("[{size}] "), e, t))?;
            print!("{}", report.csv());
        }
        Command::Classify {
            common: _,
            checkpoint,
            image,
        } => {
            let c = classify(&checkpoint, &image)?;
            println!("{}", serde_json::to_string(&c)?);
        }
        Command::Verify { common: _, dataset } => {
            let report = verify(&dataset)?;
            for p in &report.problems {
                println!("{p}");
            }
            if !report.ok() {
                bail!("{} problems in {} images", report.problems.len(), report.images_checked);
            }
            println!("ok: {} images", report.images_checked);
        }
        Command::Graph {
            common,
            image_size,
            classes,
        } => {
            let cfg = common.load()?;
            let net = FifNet::new(cfg.train.net_spec(image_size, classes))?;
            print!("{}", net.dump());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

