//! Symbol-instant sampling and gray-scale constellation rendering.
//!
//! Each received symbol point falls into exactly one pixel of a square grid
//! covering `[-R, R]²`. A pixel's value is the mean, over the points it holds,
//! of the point power weighted by `exp(-mu * d)`, where `d` is the distance
//! from the point to the pixel center in pixel widths. Empty pixels are 0 and
//! the image is scaled by its maximum into `[0, 1]`.

#[allow(unused_imports)] // float methods resolve inherently when std is linked
use num_traits::Float;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::modulation::{build_alphabet, raised_cosine_taps, IqFrame, ModulationFormat, Origin, PulseShape};

/// Symbol-spaced I/Q points of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolPoints {
    points: Vec<Complex64>,
}

impl SymbolPoints {
    pub fn new(points: Vec<Complex64>) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("symbol point set must not be empty"));
        }
        if points.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
            return Err(invalid("symbol points must be finite"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        crate::modulation::mean_power(&self.points)
    }

    /// Scales the points to unit mean power (receiver AGC).
    pub fn normalize_power(&self) -> Result<Self> {
        let p = self.mean_power();
        if !(p > 0.0) {
            return Err(Error::ZeroPower);
        }
        let g = 1.0 / p.sqrt();
        Ok(Self {
            points: self.points.iter().map(|z| z * g).collect(),
        })
    }
}

/// Samples an oversampled raised-cosine waveform at its symbol instants.
///
/// The transmit pulse is a full raised cosine, which is already a Nyquist
/// pulse, so the waveform is read at `group_delay + k * sps` and divided by the
/// pulse peak. This recovers noiseless symbols exactly; a second raised-cosine
/// filter at the receiver would add intersymbol interference.
pub fn to_symbol_points(frame: &IqFrame, shape: &PulseShape) -> Result<SymbolPoints> {
    if frame.origin() != Origin::Oversampled {
        return Err(invalid("symbol sampling needs an oversampled frame"));
    }
    let taps = raised_cosine_taps(shape)?;
    let span = taps.len();
    if frame.len() < span {
        return Err(Error::FrameTooShort { len: frame.len(), span });
    }
    let sps = shape.samples_per_symbol;
    let delay = shape.group_delay();
    let gain = 1.0 / taps[delay];
    let count = (frame.len() - span) / sps + 1;
    let s = frame.samples();
    SymbolPoints::new((0..count).map(|k| s[delay + k * sps] * gain).collect())
}

/// Rendering parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    pub image_size: usize,
    pub decay_mu: f64,
    /// Half-width of the plotted I/Q square.
    pub extent: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            image_size: 200,
            decay_mu: 0.5,
            extent: default_extent(),
        }
    }
}

impl RenderConfig {
    pub fn with_size(image_size: usize) -> Self {
        Self {
            image_size,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size < 8 {
            return Err(invalid("image size must be at least 8"));
        }
        if !(self.decay_mu > 0.0) || !self.decay_mu.is_finite() {
            return Err(invalid("decay rate must be positive"));
        }
        if !(self.extent > 0.0) || !self.extent.is_finite() {
            return Err(invalid("extent must be positive"));
        }
        Ok(())
    }

    fn pixel_of(&self, p: Complex64) -> (usize, f64) {
        let n = self.image_size as f64;
        let scale = n / (2.0 * self.extent);
        let u = ((p.re + self.extent) * scale).clamp(0.0, n);
        let v = ((self.extent - p.im) * scale).clamp(0.0, n);
        let col = (u.floor() as usize).min(self.image_size - 1);
        let row = (v.floor() as usize).min(self.image_size - 1);
        let du = u - (col as f64 + 0.5);
        let dv = v - (row as f64 + 0.5);
        (row * self.image_size + col, du.hypot(dv))
    }

    /// Row-major pixel index a point is binned into.
    pub fn pixel_index(&self, p: Complex64) -> usize {
        self.pixel_of(p).0
    }
}

/// 1.5 times the largest point radius over all supported unit-power alphabets,
/// shared by every class so that absolute amplitude stays informative.
pub fn default_extent() -> f64 {
    1.5 * ModulationFormat::ALL
        .iter()
        .map(|&f| build_alphabet(f).max_radius())
        .fold(0.0, f64::max)
}

/// Square gray-scale image with values in `[0, 1]`, row 0 at the top
/// (largest Q).
#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationImage {
    pub size: usize,
    pub pixels: Vec<f64>,
    /// Largest raw pixel value before normalization.
    pub raw_peak: f64,
    pub label: Option<ModulationFormat>,
    pub snr_db: Option<f64>,
}

impl ConstellationImage {
    pub fn with_label(mut self, label: ModulationFormat, snr_db: f64) -> Self {
        self.label = Some(label);
        self.snr_db = Some(snr_db);
        self
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.size + col]
    }
}

/// Raw per-pixel values before max normalization.
pub fn render_raw(points: &SymbolPoints, cfg: &RenderConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = cfg.image_size * cfg.image_size;
    let mut sum = alloc::vec![0.0f64; n];
    let mut count = alloc::vec![0u32; n];
    for &p in points.points() {
        let (j, d) = cfg.pixel_of(p);
        sum[j] += p.norm_sqr() * (-cfg.decay_mu * d).exp();
        count[j] += 1;
    }
    for (s, &c) in sum.iter_mut().zip(&count) {
        if c > 0 {
            *s /= c as f64;
        }
    }
    Ok(sum)
}

/// Renders a constellation image normalized to `[0, 1]` by its peak.
pub fn render(points: &SymbolPoints, cfg: &RenderConfig) -> Result<ConstellationImage> {
    let mut pixels = render_raw(points, cfg)?;
    let peak = pixels.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        for v in &mut pixels {
            *v /= peak;
        }
    }
    Ok(ConstellationImage {
        size: cfg.image_size,
        pixels,
        raw_peak: peak,
        label: None,
        snr_db: None,
    })
}

/// 8-bit gray image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: width * height,
            });
        }
        Ok(Self { width, height, data })
    }

    /// Pixel values mapped back to `[0, 1]`.
    pub fn dequantize(&self) -> Vec<f64> {
        self.data.iter().map(|&b| b as f64 / 255.0).collect()
    }
}

/// `round(v * 255)` with halves rounded up.
pub fn quantize_value(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn quantize_8bit(img: &ConstellationImage) -> GrayImage {
    GrayImage {
        width: img.size,
        height: img.size,
        data: img.pixels.iter().map(|&v| quantize_value(v)).collect(),
    }
}
