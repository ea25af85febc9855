//! Baseband symbol alphabets, random symbol frames and raised-cosine pulse
//! shaping.
//!
//! Everything here works on the complex envelope. Carrier terms never appear;
//! [`CarrierConvention`] only records the amplitude/frequency pair for
//! provenance.

#[allow(unused_imports)] // float methods resolve inherently when std is linked
use num_traits::Float;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::seed;

/// The eight digital modulation formats the classifier distinguishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModulationFormat {
    Qpsk,
    Psk8,
    Pam4,
    Pam16,
    Qam16,
    Qam64,
    Apsk16,
    Apsk64,
}

impl ModulationFormat {
    pub const ALL: [ModulationFormat; 8] = [
        ModulationFormat::Qpsk,
        ModulationFormat::Psk8,
        ModulationFormat::Pam4,
        ModulationFormat::Pam16,
        ModulationFormat::Qam16,
        ModulationFormat::Qam64,
        ModulationFormat::Apsk16,
        ModulationFormat::Apsk64,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Qpsk => "QPSK",
            Self::Psk8 => "8PSK",
            Self::Pam4 => "4PAM",
            Self::Pam16 => "16PAM",
            Self::Qam16 => "16QAM",
            Self::Qam64 => "64QAM",
            Self::Apsk16 => "16APSK",
            Self::Apsk64 => "64APSK",
        }
    }

    /// Number of points in the alphabet.
    pub fn order(self) -> usize {
        match self {
            Self::Qpsk | Self::Pam4 => 4,
            Self::Psk8 => 8,
            Self::Pam16 | Self::Qam16 | Self::Apsk16 => 16,
            Self::Qam64 | Self::Apsk64 => 64,
        }
    }
}

impl fmt::Display for ModulationFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModulationFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownFormat(s.to_string()))
    }
}

/// Carrier amplitude and frequency of the passband model. The toolkit works
/// on the complex envelope, so `carrier_hz` is recorded but never used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarrierConvention {
    pub amplitude: f64,
    pub carrier_hz: f64,
}

impl Default for CarrierConvention {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            carrier_hz: 0.0,
        }
    }
}

impl CarrierConvention {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0) {
            return Err(invalid("carrier amplitude must be positive"));
        }
        Ok(())
    }
}

/// Concentric-ring layout of an APSK alphabet before power normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ApskRingSpec {
    pub radii: Vec<f64>,
    pub ring_orders: Vec<usize>,
    pub ring_phase_offsets: Vec<f64>,
}

impl ApskRingSpec {
    /// DVB-S2 16APSK: 4 + 12 points, outer/inner radius ratio 2.57.
    pub fn dvb_16apsk() -> Self {
        Self {
            radii: alloc::vec![1.0, 2.57],
            ring_orders: alloc::vec![4, 12],
            ring_phase_offsets: alloc::vec![PI / 4.0, PI / 12.0],
        }
    }

    /// DVB-S2X style 64APSK: 4 + 12 + 20 + 28 points.
    pub fn dvb_64apsk() -> Self {
        Self {
            radii: alloc::vec![1.0, 2.2, 3.6, 5.2],
            ring_orders: alloc::vec![4, 12, 20, 28],
            ring_phase_offsets: alloc::vec![PI / 4.0, PI / 12.0, PI / 20.0, PI / 28.0],
        }
    }

    pub fn for_format(format: ModulationFormat) -> Option<Self> {
        match format {
            ModulationFormat::Apsk16 => Some(Self::dvb_16apsk()),
            ModulationFormat::Apsk64 => Some(Self::dvb_64apsk()),
            _ => None,
        }
    }

    pub fn validate(&self, order: usize) -> Result<()> {
        let n = self.radii.len();
        if n == 0 || self.ring_orders.len() != n || self.ring_phase_offsets.len() != n {
            return Err(invalid("APSK ring spec lists must be non-empty and equal length"));
        }
        if self.ring_orders.iter().sum::<usize>() != order {
            return Err(invalid("APSK ring orders must sum to the modulation order"));
        }
        if self.radii[0] <= 0.0 || self.radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("APSK radii must be positive and strictly increasing"));
        }
        Ok(())
    }

    /// Unnormalized ring points, inner ring first.
    pub fn points(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.ring_orders.iter().sum());
        for ((&r, &n), &phi) in self
            .radii
            .iter()
            .zip(&self.ring_orders)
            .zip(&self.ring_phase_offsets)
        {
            for k in 0..n {
                out.push(Complex64::from_polar(r, phi + 2.0 * PI * k as f64 / n as f64));
            }
        }
        out
    }
}

/// A unit-average-power constellation alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet {
    format: ModulationFormat,
    points: Vec<Complex64>,
}

impl Alphabet {
    pub fn format(&self) -> ModulationFormat {
        self.format
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
        mean_power(&self.points)
    }

    pub fn max_radius(&self) -> f64 {
        self.points.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    /// Parses a format name and builds its alphabet.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(build_alphabet(name.parse()?))
    }
}

pub(crate) fn mean_power(points: &[Complex64]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    points.iter().map(|p| p.norm_sqr()).sum::<f64>() / points.len() as f64
}

fn normalized(points: Vec<Complex64>) -> Vec<Complex64> {
    let scale = 1.0 / mean_power(&points).sqrt();
    points.into_iter().map(|p| p * scale).collect()
}

fn psk(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / order as f64))
        .collect()
}

fn pam(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|k| Complex64::new((2 * k) as f64 - (order - 1) as f64, 0.0))
        .collect()
}

fn square_qam(order: usize) -> Vec<Complex64> {
    let side = (order as f64).sqrt() as usize;
    debug_assert_eq!(side * side, order);
    let level = |k: usize| (2 * k) as f64 - (side - 1) as f64;
    let mut out = Vec::with_capacity(order);
    for q in 0..side {
        for i in 0..side {
            out.push(Complex64::new(level(i), level(side - 1 - q)));
        }
    }
    out
}

/// Builds the unit-power alphabet of `format`.
///
/// PSK points sit on the unit circle starting at angle 0, PAM levels are
/// uniformly spaced on the real axis, QAM is a square grid and APSK follows
/// [`ApskRingSpec::for_format`].
pub fn build_alphabet(format: ModulationFormat) -> Alphabet {
    let raw = match format {
        ModulationFormat::Qpsk | ModulationFormat::Psk8 => psk(format.order()),
        ModulationFormat::Pam4 | ModulationFormat::Pam16 => pam(format.order()),
        ModulationFormat::Qam16 | ModulationFormat::Qam64 => square_qam(format.order()),
        ModulationFormat::Apsk16 | ModulationFormat::Apsk64 => {
            let spec = ApskRingSpec::for_format(format).expect("APSK format has a ring spec");
            spec.points()
        }
    };
    Alphabet {
        format,
        points: normalized(raw),
    }
}

/// A frame of i.i.d. alphabet symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    pub format: ModulationFormat,
    pub indices: Vec<usize>,
    pub symbols: Vec<Complex64>,
}

/// Draws `count` uniform symbols of `format`. Pure in `(format, count, seed)`.
pub fn draw_symbols(format: ModulationFormat, count: usize, rng_seed: u64) -> Result<SymbolFrame> {
    if count == 0 {
        return Err(invalid("symbol count must be at least 1"));
    }
    let alphabet = build_alphabet(format);
    let mut rng = seed::rng(rng_seed);
    let order = format.order();
    let indices: Vec<usize> = (0..count).map(|_| rng.random_range(0..order)).collect();
    let symbols = indices.iter().map(|&i| alphabet.points[i]).collect();
    Ok(SymbolFrame {
        format,
        indices,
        symbols,
    })
}

/// Raised-cosine pulse parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseShape {
    pub rolloff: f64,
    /// Symbol period `T` in seconds.
    pub symbol_period: f64,
    pub span_symbols: usize,
    pub samples_per_symbol: usize,
}

impl Default for PulseShape {
    fn default() -> Self {
        Self {
            rolloff: 0.35,
            symbol_period: 1.0 / 3.84e6,
            span_symbols: 8,
            samples_per_symbol: 8,
        }
    }
}

impl PulseShape {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rolloff) {
            return Err(invalid("roll-off must lie in [0, 1]"));
        }
        if !(self.symbol_period > 0.0) || !self.symbol_period.is_finite() {
            return Err(invalid("symbol period must be positive"));
        }
        if self.span_symbols < 4 || !self.span_symbols.is_multiple_of(2) {
            return Err(invalid("filter span must be even and at least 4 symbols"));
        }
        if self.samples_per_symbol < 2 {
            return Err(invalid("at least 2 samples per symbol are required"));
        }
        Ok(())
    }

    /// Number of filter taps, `span * sps + 1`.
    pub fn tap_count(&self) -> usize {
        self.span_symbols * self.samples_per_symbol + 1
    }

    /// Delay of the filter peak in samples.
    pub fn group_delay(&self) -> usize {
        self.span_symbols * self.samples_per_symbol / 2
    }

    pub fn sample_rate(&self) -> f64 {
        self.samples_per_symbol as f64 / self.symbol_period
    }
}

/// Where the samples of an [`IqFrame`] come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Oversampled,
    SymbolSpaced,
}

/// A block of complex baseband samples.
#[derive(Debug, Clone, PartialEq)]
pub struct IqFrame {
    samples: Vec<Complex64>,
    sample_rate: f64,
    origin: Origin,
}

impl IqFrame {
    pub fn new(samples: Vec<Complex64>, sample_rate: f64, origin: Origin) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("IQ frame must not be empty"));
        }
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(invalid("sample rate must be positive"));
        }
        Ok(Self {
            samples,
            sample_rate,
            origin,
        })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }

    /// Same rate and origin, new samples. Length is not checked.
    pub(crate) fn with_samples(&self, samples: Vec<Complex64>) -> Self {
        Self {
            samples,
            sample_rate: self.sample_rate,
            origin: self.origin,
        }
    }
}

/// Normalized sinc, `sin(pi x) / (pi x)`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Raised-cosine impulse response at normalized time `t / T`.
///
/// Both removable singularities are filled with their limits: `g(0) = 1` and
/// `g(±1/(2α)) = (π/4)·sinc(1/(2α))`.
pub fn raised_cosine(t_over_period: f64, rolloff: f64) -> f64 {
    let t = t_over_period;
    let den = 1.0 - 4.0 * rolloff * rolloff * t * t;
    if den.abs() < 1e-12 {
        return PI / 4.0 * sinc(1.0 / (2.0 * rolloff));
    }
    sinc(t) * (PI * rolloff * t).cos() / den
}

/// Unit-energy raised-cosine taps sampled at `T / sps` over `±span/2` symbols.
pub fn raised_cosine_taps(shape: &PulseShape) -> Result<Vec<f64>> {
    shape.validate()?;
    let sps = shape.samples_per_symbol as f64;
    let half = shape.group_delay() as isize;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|k| raised_cosine(k as f64 / sps, shape.rolloff))
        .collect();
    let energy = taps.iter().map(|t| t * t).sum::<f64>().sqrt();
    for t in &mut taps {
        *t /= energy;
    }
    Ok(taps)
}

/// Upsamples `symbols` by `sps` and convolves with the pulse taps.
///
/// Output length is `(count - 1) * sps + taps`, so a single symbol yields the
/// tap vector scaled by that symbol.
pub fn shape_symbols(symbols: &[Complex64], shape: &PulseShape) -> Result<IqFrame> {
    if symbols.is_empty() {
        return Err(invalid("cannot pulse-shape an empty frame"));
    }
    let taps = raised_cosine_taps(shape)?;
    let sps = shape.samples_per_symbol;
    let len = (symbols.len() - 1) * sps + taps.len();
    let mut out = alloc::vec![Complex64::new(0.0, 0.0); len];
    for (i, &s) in symbols.iter().enumerate() {
        if s == Complex64::new(0.0, 0.0) {
            continue;
        }
        let base = i * sps;
        for (o, &t) in out[base..base + taps.len()].iter_mut().zip(&taps) {
            *o += s * t;
        }
    }
    IqFrame::new(out, shape.sample_rate(), Origin::Oversampled)
}

/// Pulse-shapes a symbol frame.
pub fn pulse_shape(frame: &SymbolFrame, shape: &PulseShape) -> Result<IqFrame> {
    shape_symbols(&frame.symbols, shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use std::collections::BTreeSet;

    fn distinct_levels(values: impl Iterator<Item = f64>, tol: f64) -> usize {
        let mut v: Vec<f64> = values.collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup_by(|a, b| (*a - *b).abs() < tol);
        v.len()
    }

    #[test]
    fn every_alphabet_is_unit_power_and_distinct() {
        for f in ModulationFormat::ALL {
            let a = build_alphabet(f);
            assert_eq!(a.len(), f.order(), "{f}");
            assert!((a.mean_power() - 1.0).abs() < 1e-12, "{f}: {}", a.mean_power());
            for i in 0..a.len() {
                for j in i + 1..a.len() {
                    assert!((a.points[i] - a.points[j]).norm() > 1e-6, "{f}: {i} == {j}");
                }
            }
        }
    }

    #[test]
    fn qpsk_points_on_unit_circle_quarter_turns() {
        let a = build_alphabet(ModulationFormat::Qpsk);
        for (k, p) in a.points().iter().enumerate() {
            assert!((p.norm() - 1.0).abs() < 1e-15);
            let expected = Complex64::from_polar(1.0, k as f64 * PI / 2.0);
            assert!((p - expected).norm() < 1e-15);
        }
        let psk8 = build_alphabet(ModulationFormat::Psk8);
        assert!(psk8.points().iter().all(|p| (p.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn pam4_levels() {
        let a = build_alphabet(ModulationFormat::Pam4);
        let s5 = 5f64.sqrt();
        let expected = [-3.0 / s5, -1.0 / s5, 1.0 / s5, 3.0 / s5];
        for (p, e) in a.points().iter().zip(expected) {
            assert!((p.re - e).abs() < 1e-15 && p.im == 0.0, "{p} vs {e}");
        }
        let pam16 = build_alphabet(ModulationFormat::Pam16);
        let steps: Vec<f64> = pam16.points().windows(2).map(|w| w[1].re - w[0].re).collect();
        assert!(steps.iter().all(|s| (s - steps[0]).abs() < 1e-12));
        assert!((pam16.points()[0].re + pam16.points()[15].re).abs() < 1e-12);
    }

    #[test]
    fn qam_magnitude_levels() {
        let q16 = build_alphabet(ModulationFormat::Qam16);
        let q64 = build_alphabet(ModulationFormat::Qam64);
        assert_eq!(distinct_levels(q16.points().iter().map(|p| p.norm()), 1e-9), 3);
        assert_eq!(distinct_levels(q64.points().iter().map(|p| p.norm()), 1e-9), 9);
        // square grid: 4 / 8 distinct coordinates per axis
        assert_eq!(distinct_levels(q16.points().iter().map(|p| p.re), 1e-9), 4);
        assert_eq!(distinct_levels(q64.points().iter().map(|p| p.im), 1e-9), 8);
    }

    #[test]
    fn apsk16_against_direct_enumeration() {
        // Oracle: enumerate 4 + 12 rings by hand, normalize, compare.
        let r2 = 2.57;
        let mut pts = Vec::new();
        for k in 0..4 {
            pts.push(Complex64::from_polar(1.0, PI / 4.0 + k as f64 * PI / 2.0));
        }
        for k in 0..12 {
            pts.push(Complex64::from_polar(r2, PI / 12.0 + k as f64 * PI / 6.0));
        }
        let p = (4.0 * 1.0 + 12.0 * r2 * r2) / 16.0;
        let a = build_alphabet(ModulationFormat::Apsk16);
        for (x, y) in a.points().iter().zip(&pts) {
            assert!((x - y / p.sqrt()).norm() < 1e-14);
        }
        assert!((a.mean_power() - 1.0).abs() < 1e-12);
        assert_eq!(distinct_levels(a.points().iter().map(|p| p.norm()), 1e-9), 2);
        let inner = a.points().iter().filter(|z| z.norm() < 0.6).count();
        assert_eq!(inner, 4);
    }

    #[test]
    fn apsk64_ring_count() {
        let a = build_alphabet(ModulationFormat::Apsk64);
        assert_eq!(distinct_levels(a.points().iter().map(|p| p.norm()), 1e-9), 4);
        let spec = ApskRingSpec::dvb_64apsk();
        spec.validate(64).unwrap();
        let ratio = a.points()[63].norm() / a.points()[0].norm();
        assert!((ratio - 5.2).abs() < 1e-12);
    }

    #[test]
    fn ring_spec_validation() {
        let mut s = ApskRingSpec::dvb_16apsk();
        assert!(s.validate(16).is_ok());
        assert!(s.validate(64).is_err());
        s.radii = vec![2.0, 1.0];
        assert!(s.validate(16).is_err());
    }

    #[test]
    fn format_names_round_trip() {
        for f in ModulationFormat::ALL {
            assert_eq!(f.name().parse::<ModulationFormat>().unwrap(), f);
        }
        assert_eq!("qpsk".parse::<ModulationFormat>().unwrap(), ModulationFormat::Qpsk);
        assert!(matches!("32QAM".parse::<ModulationFormat>(), Err(Error::UnknownFormat(_))));
        assert!(Alphabet::from_name("BPSK").is_err());
    }

    #[test]
    fn draw_symbols_is_deterministic() {
        let a = draw_symbols(ModulationFormat::Qpsk, 8, 7).unwrap();
        let b = draw_symbols(ModulationFormat::Qpsk, 8, 7).unwrap();
        assert_eq!(a, b);
        let c = draw_symbols(ModulationFormat::Qpsk, 8, 8).unwrap();
        assert_ne!(a.indices, c.indices);
    }

    #[test]
    fn draw_symbols_bounds_and_errors() {
        let f = draw_symbols(ModulationFormat::Qam64, 1, 3).unwrap();
        assert_eq!(f.indices.len(), 1);
        assert!(f.indices[0] < 64);
        let alpha = build_alphabet(ModulationFormat::Qam64);
        assert_eq!(f.symbols[0], alpha.points()[f.indices[0]]);
        assert!(draw_symbols(ModulationFormat::Qpsk, 0, 1).is_err());
    }

    #[test]
    fn draw_symbols_uniform_frequencies() {
        let n = 1_000_000;
        let f = draw_symbols(ModulationFormat::Qpsk, n, 2024).unwrap();
        let mut counts = [0usize; 4];
        for &i in &f.indices {
            counts[i] += 1;
        }
        let mut chi2 = 0.0;
        for c in counts {
            let freq = c as f64 / n as f64;
            assert!((freq - 0.25).abs() < 0.01 * 0.25, "freq {freq}");
            chi2 += (c as f64 - n as f64 / 4.0).powi(2) / (n as f64 / 4.0);
        }
        // 3 degrees of freedom, 99.9% quantile
        assert!(chi2 < 16.27, "chi2 {chi2}");
    }

    #[test]
    fn pulse_shape_validation() {
        let ok = PulseShape::default();
        assert!(ok.validate().is_ok());
        for bad in [
            PulseShape { rolloff: 1.2, ..ok },
            PulseShape { span_symbols: 5, ..ok },
            PulseShape { span_symbols: 2, ..ok },
            PulseShape { samples_per_symbol: 1, ..ok },
        ] {
            assert!(raised_cosine_taps(&bad).is_err());
        }
    }

    #[test]
    fn zero_rolloff_is_sinc() {
        let shape = PulseShape {
            rolloff: 0.0,
            ..PulseShape::default()
        };
        let taps = raised_cosine_taps(&shape).unwrap();
        let sps = shape.samples_per_symbol as f64;
        let half = shape.group_delay() as isize;
        let raw: Vec<f64> = (-half..=half).map(|k| sinc(k as f64 / sps)).collect();
        let e = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (t, r) in taps.iter().zip(&raw) {
            assert!((t - r / e).abs() < 1e-15);
        }
    }

    #[test]
    fn taps_symmetric_unit_energy_peak_at_center() {
        for alpha in [0.0, 0.1, 0.25, 0.35, 0.5, 0.8, 1.0] {
            let shape = PulseShape {
                rolloff: alpha,
                ..PulseShape::default()
            };
            let taps = raised_cosine_taps(&shape).unwrap();
            let l = taps.len();
            assert_eq!(l, shape.tap_count());
            for k in 0..l {
                assert!((taps[k] - taps[l - 1 - k]).abs() < 1e-15);
            }
            let e: f64 = taps.iter().map(|t| t * t).sum();
            assert!((e - 1.0).abs() < 1e-9);
            let c = shape.group_delay();
            assert!(taps.iter().all(|&t| t <= taps[c]));
        }
    }

    #[test]
    fn singular_point_matches_limit() {
        // Approach t = T/(2α) from both sides with shrinking ε; the general
        // formula must converge to the filled-in limit value.
        let alpha = 0.35;
        let t0 = 1.0 / (2.0 * alpha);
        let limit = raised_cosine(t0, alpha);
        assert!(limit.is_finite());
        let mut prev_err = f64::INFINITY;
        for eps in [1e-2, 1e-3, 1e-4, 1e-5, 1e-6] {
            let left = raised_cosine(t0 - eps, alpha);
            let right = raised_cosine(t0 + eps, alpha);
            let err = (left - limit).abs().max((right - limit).abs());
            assert!(err <= prev_err + 1e-12);
            prev_err = err;
        }
        assert!(prev_err < 1e-6, "{prev_err}");
        // neighbors on the sps = 8 grid stay continuous with the limit
        let near = raised_cosine(t0 - 1.0 / 8.0 / 1e3, alpha);
        assert!((near - limit).abs() < 1e-3);
    }

    #[test]
    fn single_symbol_yields_taps() {
        let shape = PulseShape::default();
        let taps = raised_cosine_taps(&shape).unwrap();
        let s = Complex64::new(0.6, -0.8);
        let out = shape_symbols(&[s], &shape).unwrap();
        assert_eq!(out.len(), taps.len());
        assert_eq!(out.origin(), Origin::Oversampled);
        assert!((out.sample_rate() - 8.0 * 3.84e6).abs() < 1e-3);
        for (o, t) in out.samples().iter().zip(&taps) {
            assert!((o - s * t).norm() < 1e-15);
        }
    }

    #[test]
    fn constant_frame_is_isi_free_at_symbol_instants() {
        let shape = PulseShape::default();
        let taps = raised_cosine_taps(&shape).unwrap();
        let gain = taps[shape.group_delay()];
        let s = Complex64::new(0.3, 0.9);
        let n = 64;
        let out = shape_symbols(&vec![s; n], &shape).unwrap();
        assert_eq!(out.len(), (n - 1) * 8 + taps.len());
        for k in shape.span_symbols..n - shape.span_symbols {
            let sample = out.samples()[shape.group_delay() + k * 8] / gain;
            assert!((sample - s).norm() < 1e-3, "k={k}: {sample}");
        }
    }

    #[test]
    fn guarded_symbols_energy_bookkeeping() {
        // Symbols separated by zero guards longer than the span do not overlap,
        // so output energy is exactly the sum of symbol energies (unit-energy taps).
        let shape = PulseShape::default();
        let alpha = build_alphabet(ModulationFormat::Qam16);
        let mut syms = Vec::new();
        let mut expected = 0.0;
        for k in 0..6 {
            let p = alpha.points()[k * 2];
            syms.push(p);
            expected += p.norm_sqr();
            syms.extend(core::iter::repeat_n(Complex64::new(0.0, 0.0), shape.span_symbols));
        }
        syms.truncate(syms.len() - shape.span_symbols);
        let out = shape_symbols(&syms, &shape).unwrap();
        let e: f64 = out.samples().iter().map(|z| z.norm_sqr()).sum();
        assert!((e - expected).abs() < 1e-12);
        // transient tail of the last symbol occupies exactly tap_count samples
        let last = (syms.len() - 1) * shape.samples_per_symbol;
        assert_eq!(out.len() - last, shape.tap_count());
    }

    #[test]
    fn iq_frame_rejects_bad_input() {
        assert!(IqFrame::new(vec![], 1.0, Origin::Oversampled).is_err());
        assert!(IqFrame::new(vec![Complex64::new(1.0, 0.0)], 0.0, Origin::Oversampled).is_err());
        let levels: BTreeSet<usize> = ModulationFormat::ALL.iter().map(|f| f.order()).collect();
        assert_eq!(levels.into_iter().collect::<Vec<_>>(), vec![4, 8, 16, 64]);
    }
}
