//! Dataset generation and offline verification.
//!
//! Each frame has its own seed derived from the master seed, the format, the
//! SNR and the frame index. The image size plays no part in it, so datasets
//! rendered at different sizes share every symbol, channel and noise draw.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use amc_core::channel::{add_awgn, apply_multipath, draw_channel, ChannelRealization, SnrSpec};
use amc_core::modulation::{draw_symbols, pulse_shape, ModulationFormat};
use amc_core::render::{quantize_8bit, render, to_symbol_points, ConstellationImage, GrayImage, SymbolPoints};
use amc_core::seed::{self, Stream};
use amc_core::Complex64;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::DatasetConfig;
use crate::error::{HarnessError, IoContext, Result};
use crate::manifest::{cell_key, ImageRecord, Manifest, ManifestHeader, MANIFEST_VERSION, RENDERING};
use crate::pgm;

/// Present while a generation run is in progress or was interrupted.
pub const INCOMPLETE_MARKER: &str = ".incomplete";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn complex_digest(values: &[Complex64]) -> String {
    let mut h = Sha256::new();
    for z in values {
        h.update(z.re.to_le_bytes());
        h.update(z.im.to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn format_code(format: ModulationFormat) -> u64 {
    ModulationFormat::ALL.iter().position(|&f| f == format).expect("listed") as u64
}

pub fn frame_seed(master: u64, format: ModulationFormat, snr_db: f64, index: usize) -> u64 {
    let snr_key = (snr_db * 100.0).round() as i64 as u64;
    seed::derive(master, &[format_code(format), snr_key, index as u64])
}

/// Received symbol points of one frame and the channel that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub points: SymbolPoints,
    pub channel: ChannelRealization,
}

impl Frame {
    pub fn points_digest(&self) -> String {
        complex_digest(self.points.points())
    }

    pub fn channel_digest(&self) -> String {
        complex_digest(&self.channel.taps)
    }
}

/// Symbols → pulse shaping → multipath → AWGN → symbol-instant sampling.
pub fn synthesize_frame(cfg: &DatasetConfig, format: ModulationFormat, snr: SnrSpec, frame_seed: u64) -> Result<Frame> {
    let shape = cfg.pulse_shape();
    let profile = cfg.channel_profile();
    let symbols = draw_symbols(format, cfg.symbols_per_frame, seed::stream_seed(frame_seed, Stream::Symbols))?;
    let tx = pulse_shape(&symbols, &shape)?;
    let channel = draw_channel(&profile, seed::stream_seed(frame_seed, Stream::Channel))?;
    let faded = apply_multipath(&tx, &channel, &profile)?;
    let rx = add_awgn(&faded, snr, seed::stream_seed(frame_seed, Stream::Noise))?;
    let mut points = to_symbol_points(&rx, &shape)?;
    if cfg.normalize_power {
        points = points.normalize_power()?;
    }
    Ok(Frame { points, channel })
}

pub fn render_gray(points: &SymbolPoints, cfg: &DatasetConfig) -> Result<GrayImage> {
    Ok(quantize_8bit(&render(points, &cfg.render_config())?))
}

pub fn image_rel_path(format: ModulationFormat, snr_db: f64, index: usize) -> String {
    format!("images/{}/snr{:+}/{:05}.pgm", format.name(), snr_db, index)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenReport {
    pub manifest: Manifest,
    pub written: usize,
    pub unchanged: usize,
}

struct Job {
    label_index: usize,
    format: ModulationFormat,
    snr: SnrSpec,
    index: usize,
}

fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<bool> {
    if fs::read(path).is_ok_and(|old| old == bytes) {
        return Ok(false);
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).at(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).at(&tmp)?;
    fs::rename(&tmp, path).at(path)?;
    Ok(true)
}

/// Generates every image of `cfg` under `dir` and writes the manifest last.
///
/// Re-running on a partial or complete directory is idempotent: files whose
/// bytes already match are left alone, and existing split assignments are kept
/// for records that did not change.
pub fn gen_dataset(cfg: &DatasetConfig, dir: &Path) -> Result<GenReport> {
    cfg.validate()?;
    let formats = cfg.formats()?;
    let snrs = cfg.snrs()?;
    fs::create_dir_all(dir).at(dir)?;
    let marker = dir.join(INCOMPLETE_MARKER);
    fs::write(&marker, b"generation in progress\n").at(&marker)?;
    let previous = Manifest::load(dir).ok();

    let mut jobs = Vec::with_capacity(cfg.image_count());
    for (label_index, &format) in formats.iter().enumerate() {
        for &snr in &snrs {
            for index in 0..cfg.frames_per_class_per_snr {
                jobs.push(Job {
                    label_index,
                    format,
                    snr,
                    index,
                });
            }
        }
    }
    let results = jobs
        .par_iter()
        .map(|job| -> Result<(ImageRecord, bool)> {
            let fs_seed = frame_seed(cfg.master_seed, job.format, job.snr.db(), job.index);
            let frame = synthesize_frame(cfg, job.format, job.snr, fs_seed)?;
            let bytes = pgm::encode(&render_gray(&frame.points, cfg)?);
            let rel = image_rel_path(job.format, job.snr.db(), job.index);
            let written = write_if_changed(&dir.join(&rel), &bytes)?;
            let record = ImageRecord {
                path: rel,
                label: job.format.name().to_string(),
                label_index: job.label_index,
                snr_db: job.snr.db(),
                frame_index: job.index,
                frame_seed: fs_seed,
                channel_digest: frame.channel_digest(),
                points_digest: frame.points_digest(),
                image_sha256: sha256_hex(&bytes),
                split: None,
            };
            Ok((record, written))
        })
        .collect::<Result<Vec<_>>>()?;

    let written = results.iter().filter(|(_, w)| *w).count();
    let unchanged = results.len() - written;
    let mut records: Vec<ImageRecord> = results.into_iter().map(|(r, _)| r).collect();
    if let Some(prev) = previous {
        if prev.header.config == *cfg && prev.records.len() == records.len() {
            for (r, p) in records.iter_mut().zip(&prev.records) {
                if p.path == r.path && p.image_sha256 == r.image_sha256 {
                    r.split = p.split;
                }
            }
        }
    }
    let manifest = Manifest {
        header: ManifestHeader {
            format_version: MANIFEST_VERSION,
            rendering: RENDERING.into(),
            classes: formats.iter().map(|f| f.name().to_string()).collect(),
            config: cfg.clone(),
        },
        records,
    };
    manifest.save(dir)?;
    fs::remove_file(&marker).at(&marker)?;
    Ok(GenReport {
        manifest,
        written,
        unchanged,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub images_checked: usize,
    pub problems: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Re-hashes every image and checks sizes, cell balance and the completion
/// marker.
pub fn verify(dir: &Path) -> Result<VerifyReport> {
    let manifest = Manifest::load(dir)?;
    let cfg = &manifest.header.config;
    let mut problems = Vec::new();
    if dir.join(INCOMPLETE_MARKER).exists() {
        problems.push("generation marker present: the last run did not finish".to_string());
    }
    let mut seen = HashSet::new();
    for r in &manifest.records {
        if !seen.insert(&r.path) {
            problems.push(format!("{}: listed twice", r.path));
        }
    }
    let per_image: Vec<Option<String>> = manifest
        .records
        .par_iter()
        .map(|r| {
            let path = dir.join(&r.path);
            let bytes = match fs::read(&path) {
                Ok(b) => b,
                Err(e) => return Some(format!("{}: {e}", r.path)),
            };
            if sha256_hex(&bytes) != r.image_sha256 {
                return Some(format!("{}: hash mismatch", r.path));
            }
            match pgm::decode(&bytes) {
                Ok(img) if img.width == cfg.image_size && img.height == cfg.image_size => None,
                Ok(img) => Some(format!(
                    "{}: {}x{} but the config says {}",
                    r.path, img.width, img.height, cfg.image_size
                )),
                Err(e) => Some(format!("{}: {e}", r.path)),
            }
        })
        .collect();
    problems.extend(per_image.into_iter().flatten());

    let mut cells: BTreeMap<_, usize> = BTreeMap::new();
    for r in &manifest.records {
        *cells.entry(cell_key(r)).or_default() += 1;
    }
    let expected_cells = cfg.formats.len() * cfg.snr_list_db.len();
    if cells.len() != expected_cells {
        problems.push(format!("{} (format, snr) cells, expected {expected_cells}", cells.len()));
    }
    for ((label, snr), n) in cells {
        if n != cfg.frames_per_class_per_snr {
            problems.push(format!(
                "cell ({}, {} dB) has {n} images, expected {}",
                manifest.header.classes[label],
                snr as f64 / 100.0,
                cfg.frames_per_class_per_snr
            ));
        }
    }
    Ok(VerifyReport {
        images_checked: manifest.records.len(),
        problems,
    })
}

/// One decoded image with its class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: ConstellationImage,
    pub label: usize,
    pub snr_db: f64,
}

pub fn image_from_gray(img: &GrayImage) -> Result<ConstellationImage> {
    if img.width != img.height {
        return Err(HarnessError::PgmMalformed(format!(
            "image is {}x{}, constellation images are square",
            img.width, img.height
        )));
    }
    Ok(ConstellationImage {
        size: img.width,
        pixels: img.dequantize(),
        raw_peak: 1.0,
        label: None,
        snr_db: None,
    })
}

/// Loads the listed records from disk, in order.
pub fn load_samples<'a>(dir: &Path, records: impl IntoIterator<Item = &'a ImageRecord>) -> Result<Vec<Sample>> {
    let records: Vec<&ImageRecord> = records.into_iter().collect();
    records
        .par_iter()
        .map(|r| {
            Ok(Sample {
                image: image_from_gray(&pgm::read(&dir.join(&r.path))?)?,
                label: r.label_index,
                snr_db: r.snr_db,
            })
        })
        .collect()
}
