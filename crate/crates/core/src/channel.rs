//! Quasi-static multipath Rayleigh fading and SNR-calibrated AWGN.
//!
//! A frame sees one [`ChannelRealization`] (one complex gain per path, held for
//! the whole frame). Fractional path delays are realized with a 64-tap
//! Hann-windowed sinc interpolator at the frame's sample rate. Noise is
//! calibrated against the measured power of the faded signal, so the SNR of
//! every frame is exact regardless of the fading draw.

#[allow(unused_imports)] // float methods resolve inherently when std is linked
use num_traits::Float;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::modulation::{sinc, IqFrame, Origin};
use crate::seed;

/// Length of the fractional-delay interpolator.
pub const INTERP_TAPS: usize = 64;

/// Power-delay profile of a tapped-delay-line channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile {
    pub path_delays_ns: Vec<f64>,
    pub avg_path_gains_db: Vec<f64>,
}

impl Default for ChannelProfile {
    fn default() -> Self {
        Self::pedestrian_a()
    }
}

impl ChannelProfile {
    /// ITU Pedestrian A.
    pub fn pedestrian_a() -> Self {
        Self {
            path_delays_ns: alloc::vec![0.0, 110.0, 190.0, 410.0],
            avg_path_gains_db: alloc::vec![0.0, -9.7, -19.2, -22.8],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.path_delays_ns.is_empty() || self.path_delays_ns.len() != self.avg_path_gains_db.len() {
            return Err(invalid("channel profile needs equal-length, non-empty delay and gain lists"));
        }
        if self.path_delays_ns[0] != 0.0 {
            return Err(invalid("first path delay must be 0"));
        }
        if self.path_delays_ns.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(invalid("path delays must be finite and non-negative"));
        }
        if self.avg_path_gains_db.iter().any(|g| !(*g <= 0.0)) {
            return Err(invalid("average path gains must be <= 0 dB"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.path_delays_ns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.path_delays_ns.is_empty()
    }

    /// Linear average power of each path.
    pub fn path_powers(&self) -> Vec<f64> {
        self.avg_path_gains_db.iter().map(|g| db_to_linear(*g)).collect()
    }

    /// Path delays in samples at `sample_rate`. Values within 1e-9 of an
    /// integer are snapped to it.
    pub fn delays_in_samples(&self, sample_rate: f64) -> Vec<f64> {
        self.path_delays_ns
            .iter()
            .map(|ns| {
                let d = ns * 1e-9 * sample_rate;
                if (d - d.round()).abs() < 1e-9 {
                    d.round()
                } else {
                    d
                }
            })
            .collect()
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// One draw of complex path gains, held constant over a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub taps: Vec<Complex64>,
    pub frame_id: u64,
}

/// A signal-to-noise ratio in dB on the supported grid range [-20, +30].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SnrSpec(f64);

impl SnrSpec {
    pub const MIN_DB: f64 = -20.0;
    pub const MAX_DB: f64 = 30.0;

    pub fn new(snr_db: f64) -> Result<Self> {
        if !(Self::MIN_DB..=Self::MAX_DB).contains(&snr_db) {
            return Err(invalid(alloc::format!(
                "SNR {snr_db} dB outside [{}, {}]",
                Self::MIN_DB,
                Self::MAX_DB
            )));
        }
        Ok(Self(snr_db))
    }

    pub fn db(self) -> f64 {
        self.0
    }

    pub fn linear(self) -> f64 {
        db_to_linear(self.0)
    }

    /// -20 dB to +30 dB in 5 dB steps.
    pub fn ladder() -> Vec<SnrSpec> {
        (0..=10).map(|k| SnrSpec(-20.0 + 5.0 * k as f64)).collect()
    }
}

fn complex_gaussian<R: rand::Rng>(rng: &mut R, variance: f64) -> Complex64 {
    let sigma = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * sigma, im * sigma)
}

/// Draws circular complex Gaussian path gains with the profile's average
/// powers, so each magnitude is Rayleigh distributed.
pub fn draw_channel(profile: &ChannelProfile, rng_seed: u64) -> Result<ChannelRealization> {
    profile.validate()?;
    let mut rng = seed::rng(rng_seed);
    let taps = profile
        .path_powers()
        .into_iter()
        .map(|p| complex_gaussian(&mut rng, p))
        .collect();
    Ok(ChannelRealization {
        taps,
        frame_id: rng_seed,
    })
}

/// Interpolator for a delay of `delay` samples: returns the index offset of the
/// first tap and the taps, such that `y[n] = Σ_m h[m] x[n - (first + m)]`.
///
/// Integer delays give a single unit tap. Fractional delays use a Hann-windowed
/// sinc normalized to unit DC gain.
pub fn fractional_delay_taps(delay: f64) -> (isize, Vec<f64>) {
    let whole = delay.floor();
    if delay == whole {
        return (whole as isize, alloc::vec![1.0]);
    }
    let half = (INTERP_TAPS / 2) as f64;
    let first = whole as isize - (INTERP_TAPS as isize / 2 - 1);
    let mut taps: Vec<f64> = (0..INTERP_TAPS)
        .map(|m| {
            let tau = (first + m as isize) as f64 - delay;
            let w = 0.5 * (1.0 + (PI * tau / half).cos());
            sinc(tau) * w
        })
        .collect();
    let dc: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= dc;
    }
    (first, taps)
}

fn delayed_accumulate(out: &mut [Complex64], input: &[Complex64], gain: Complex64, delay: f64) {
    let (first, taps) = fractional_delay_taps(delay);
    let len = input.len() as isize;
    for (m, &h) in taps.iter().enumerate() {
        let shift = first + m as isize;
        let g = gain * h;
        // y[n] += g * x[n - shift] for all n with 0 <= n - shift < len
        let n_lo = shift.max(0);
        let n_hi = (len + shift).min(len);
        if n_lo >= n_hi {
            continue;
        }
        let src = (n_lo - shift) as usize;
        let count = (n_hi - n_lo) as usize;
        for (o, &x) in out[n_lo as usize..n_lo as usize + count]
            .iter_mut()
            .zip(&input[src..src + count])
        {
            *o += g * x;
        }
    }
}

/// Passes an oversampled frame through the multipath channel. The output has
/// the same length as the input.
pub fn apply_multipath(
    frame: &IqFrame,
    realization: &ChannelRealization,
    profile: &ChannelProfile,
) -> Result<IqFrame> {
    profile.validate()?;
    if frame.origin() != Origin::Oversampled {
        return Err(invalid("multipath needs an oversampled frame"));
    }
    if realization.taps.len() != profile.len() {
        return Err(Error::LengthMismatch {
            left: realization.taps.len(),
            right: profile.len(),
        });
    }
    let delays = profile.delays_in_samples(frame.sample_rate());
    let len = frame.len();
    if let Some(&d) = delays.iter().find(|&&d| d >= len as f64) {
        return Err(Error::DelayExceedsFrame {
            delay_samples: d,
            frame_len: len,
        });
    }
    let mut out = alloc::vec![Complex64::new(0.0, 0.0); len];
    for (&tap, &d) in realization.taps.iter().zip(&delays) {
        if tap == Complex64::new(0.0, 0.0) {
            continue;
        }
        delayed_accumulate(&mut out, frame.samples(), tap, d);
    }
    Ok(frame.with_samples(out))
}

/// Adds complex white Gaussian noise with per-sample variance
/// `P_signal / 10^(snr/10)`, where `P_signal` is the measured mean power of
/// `frame`.
pub fn add_awgn(frame: &IqFrame, snr: SnrSpec, rng_seed: u64) -> Result<IqFrame> {
    let power = frame.mean_power();
    if !(power > 0.0) {
        return Err(Error::ZeroPower);
    }
    let variance = power / snr.linear();
    let mut rng = seed::rng(rng_seed);
    let samples = frame
        .samples()
        .iter()
        .map(|&x| x + complex_gaussian(&mut rng, variance))
        .collect();
    Ok(frame.with_samples(samples))
}

/// Empirical SNR in dB, `10 log10(P_clean / P_(noisy - clean))`.
///
/// Returns `f64::INFINITY` when `noisy == clean`.
pub fn measure_snr(clean: &IqFrame, noisy: &IqFrame) -> Result<f64> {
    if clean.len() != noisy.len() {
        return Err(Error::LengthMismatch {
            left: clean.len(),
            right: noisy.len(),
        });
    }
    let p_clean = clean.mean_power();
    let p_noise = clean
        .samples()
        .iter()
        .zip(noisy.samples())
        .map(|(c, n)| (n - c).norm_sqr())
        .sum::<f64>()
        / clean.len() as f64;
    if p_noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (p_clean / p_noise).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modulation::{draw_symbols, pulse_shape, ModulationFormat, PulseShape};
    use alloc::vec;
    use proptest::prelude::*;

    const FS: f64 = 8.0 * 3.84e6;

    fn noise_frame(n: usize, seed: u64) -> IqFrame {
        let mut rng = seed::rng(seed);
        let s = (0..n).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        IqFrame::new(s, FS, Origin::Oversampled).unwrap()
    }

    #[test]
    fn profile_defaults_and_validation() {
        let p = ChannelProfile::pedestrian_a();
        p.validate().unwrap();
        assert_eq!(p.len(), 4);
        let d = p.delays_in_samples(FS);
        assert!((d[1] - 3.3792).abs() < 1e-9);
        assert!((d[3] - 12.5952).abs() < 1e-9);
        let mut bad = p.clone();
        bad.avg_path_gains_db[1] = 1.0;
        assert!(bad.validate().is_err());
        let mut bad = p.clone();
        bad.path_delays_ns[0] = 5.0;
        assert!(bad.validate().is_err());
        let mut bad = p;
        bad.avg_path_gains_db.pop();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn snr_spec_range() {
        assert!(SnrSpec::new(-20.0).is_ok());
        assert!(SnrSpec::new(30.0).is_ok());
        assert!(SnrSpec::new(31.0).is_err());
        assert!(SnrSpec::new(f64::NAN).is_err());
        let l = SnrSpec::ladder();
        assert_eq!(l.len(), 11);
        assert_eq!(l[0].db(), -20.0);
        assert_eq!(l[10].db(), 30.0);
    }

    #[test]
    fn tap_power_monte_carlo() {
        let profile = ChannelProfile::pedestrian_a();
        let n = 100_000;
        let mut acc = [0.0f64; 4];
        for i in 0..n {
            let r = draw_channel(&profile, seed::derive(99, &[i])).unwrap();
            for (a, t) in acc.iter_mut().zip(&r.taps) {
                *a += t.norm_sqr();
            }
        }
        let mean0 = acc[0] / n as f64;
        let mean1 = acc[1] / n as f64;
        assert!((mean0 - 1.0).abs() < 0.02, "{mean0}");
        let target1 = 10f64.powf(-0.97);
        assert!(((mean1 - target1) / target1).abs() < 0.03, "{mean1} vs {target1}");
    }

    #[test]
    fn draw_channel_deterministic() {
        let p = ChannelProfile::pedestrian_a();
        assert_eq!(draw_channel(&p, 5).unwrap(), draw_channel(&p, 5).unwrap());
        assert_ne!(draw_channel(&p, 5).unwrap().taps, draw_channel(&p, 6).unwrap().taps);
    }

    fn shaped_frame() -> IqFrame {
        let f = draw_symbols(ModulationFormat::Qam16, 200, 3).unwrap();
        pulse_shape(&f, &PulseShape::default()).unwrap()
    }

    #[test]
    fn identity_and_scalar_channels() {
        let x = shaped_frame();
        let p = ChannelProfile::pedestrian_a();
        let one = ChannelRealization {
            taps: vec![Complex64::new(1.0, 0.0), Complex64::default(), Complex64::default(), Complex64::default()],
            frame_id: 0,
        };
        let y = apply_multipath(&x, &one, &p).unwrap();
        assert_eq!(y.len(), x.len());
        for (a, b) in x.samples().iter().zip(y.samples()) {
            assert!((a - b).norm() < 1e-9);
        }
        let half = ChannelRealization {
            taps: vec![Complex64::new(0.5, 0.0), Complex64::default(), Complex64::default(), Complex64::default()],
            frame_id: 0,
        };
        let y = apply_multipath(&x, &half, &p).unwrap();
        for (a, b) in x.samples().iter().zip(y.samples()) {
            assert_eq!(*b, *a * 0.5);
        }
    }

    #[test]
    fn integer_delays_match_shifted_sum() {
        let x = noise_frame(300, 1);
        let profile = ChannelProfile {
            path_delays_ns: vec![0.0, 3.0 / FS * 1e9, 7.0 / FS * 1e9],
            avg_path_gains_db: vec![0.0, -3.0, -6.0],
        };
        let taps = vec![Complex64::new(0.8, -0.1), Complex64::new(-0.3, 0.4), Complex64::new(0.1, 0.2)];
        let r = ChannelRealization { taps: taps.clone(), frame_id: 0 };
        let y = apply_multipath(&x, &r, &profile).unwrap();
        // brute force: y[n] = Σ_k a_k x[n - d_k]
        for n in 0..x.len() {
            let mut expect = Complex64::default();
            for (a, d) in taps.iter().zip([0usize, 3, 7]) {
                if n >= d {
                    expect += a * x.samples()[n - d];
                }
            }
            assert!((y.samples()[n] - expect).norm() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn fractional_delay_taps_properties() {
        let (first, taps) = fractional_delay_taps(3.3792);
        assert_eq!(taps.len(), INTERP_TAPS);
        assert_eq!(first, 3 - 31);
        assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // peak sits on the nearest integer sample
        let (imax, _) = taps
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        assert_eq!(first + imax as isize, 3);
        assert_eq!(fractional_delay_taps(4.0), (4, vec![1.0]));
    }

    #[test]
    fn fractional_delay_of_bandlimited_signal() {
        // A slow complex tone delayed by a fractional amount matches the
        // analytically delayed tone away from the frame edges.
        let n = 512;
        let f = 0.02;
        let tone = |t: f64| Complex64::from_polar(1.0, 2.0 * PI * f * t);
        let x = IqFrame::new((0..n).map(|i| tone(i as f64)).collect(), FS, Origin::Oversampled).unwrap();
        let delay = 2.6;
        let profile = ChannelProfile {
            path_delays_ns: vec![0.0, delay / FS * 1e9],
            avg_path_gains_db: vec![0.0, 0.0],
        };
        let r = ChannelRealization {
            taps: vec![Complex64::default(), Complex64::new(1.0, 0.0)],
            frame_id: 0,
        };
        let y = apply_multipath(&x, &r, &profile).unwrap();
        for i in 64..n - 64 {
            assert!((y.samples()[i] - tone(i as f64 - delay)).norm() < 1e-3, "i={i}");
        }
    }

    #[test]
    fn delay_longer_than_frame_rejected() {
        let x = IqFrame::new(vec![Complex64::new(1.0, 0.0); 10], FS, Origin::Oversampled).unwrap();
        let p = ChannelProfile::pedestrian_a();
        let r = draw_channel(&p, 1).unwrap();
        assert!(matches!(apply_multipath(&x, &r, &p), Err(Error::DelayExceedsFrame { .. })));
        let sym = IqFrame::new(vec![Complex64::new(1.0, 0.0); 100], FS, Origin::SymbolSpaced).unwrap();
        assert!(apply_multipath(&sym, &r, &p).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn multipath_is_linear(seed_x in any::<u64>(), seed_y in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let p = ChannelProfile::pedestrian_a();
            let r = draw_channel(&p, seed_x ^ seed_y).unwrap();
            let x = noise_frame(128, seed_x);
            let y = noise_frame(128, seed_y);
            let mix: Vec<Complex64> = x.samples().iter().zip(y.samples()).map(|(u, v)| u * a + v * b).collect();
            let mix = IqFrame::new(mix, FS, Origin::Oversampled).unwrap();
            let cx = apply_multipath(&x, &r, &p).unwrap();
            let cy = apply_multipath(&y, &r, &p).unwrap();
            let cm = apply_multipath(&mix, &r, &p).unwrap();
            for i in 0..128 {
                let expect = cx.samples()[i] * a + cy.samples()[i] * b;
                prop_assert!((cm.samples()[i] - expect).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn awgn_zero_db_power_match() {
        let x = noise_frame(100_000, 11);
        let y = add_awgn(&x, SnrSpec::new(0.0).unwrap(), 12).unwrap();
        let noise: f64 = x.samples().iter().zip(y.samples()).map(|(a, b)| (b - a).norm_sqr()).sum::<f64>() / 1e5;
        assert!((noise / x.mean_power() - 1.0).abs() < 0.02);
    }

    #[test]
    fn awgn_calibration_extremes() {
        for (snr, seed) in [(30.0, 1u64), (-20.0, 2)] {
            let x = noise_frame(1_000_000, seed);
            let y = add_awgn(&x, SnrSpec::new(snr).unwrap(), seed + 100).unwrap();
            let m = measure_snr(&x, &y).unwrap();
            assert!((m - snr).abs() < 0.1, "{snr}: {m}");
        }
    }

    #[test]
    fn awgn_is_white() {
        let n = 1_000_000;
        let x = IqFrame::new(vec![Complex64::new(1.0, 0.0); n], FS, Origin::Oversampled).unwrap();
        let y = add_awgn(&x, SnrSpec::new(0.0).unwrap(), 77).unwrap();
        let w: Vec<Complex64> = y.samples().iter().map(|s| s - 1.0).collect();
        let r0: f64 = w.iter().map(|z| z.norm_sqr()).sum();
        for lag in 1..=8 {
            let r: Complex64 = (lag..n).map(|i| w[i] * w[i - lag].conj()).sum();
            assert!(r.norm() / r0 < 0.01, "lag {lag}: {}", r.norm() / r0);
        }
    }

    #[test]
    fn awgn_deterministic_and_rejects_silence() {
        let x = noise_frame(64, 3);
        let s = SnrSpec::new(10.0).unwrap();
        assert_eq!(add_awgn(&x, s, 9).unwrap(), add_awgn(&x, s, 9).unwrap());
        let z = IqFrame::new(vec![Complex64::default(); 64], FS, Origin::Oversampled).unwrap();
        assert_eq!(add_awgn(&z, s, 9), Err(Error::ZeroPower));
    }

    #[test]
    fn measure_snr_edge_cases() {
        let x = noise_frame(100_000, 5);
        assert_eq!(measure_snr(&x, &x).unwrap(), f64::INFINITY);
        // noise is an independent draw of equal power
        let n = noise_frame(100_000, 6);
        let y: Vec<Complex64> = x.samples().iter().zip(n.samples()).map(|(a, b)| a + b).collect();
        let y = IqFrame::new(y, FS, Origin::Oversampled).unwrap();
        assert!(measure_snr(&x, &y).unwrap().abs() < 0.1);
        let short = noise_frame(10, 1);
        assert!(matches!(measure_snr(&x, &short), Err(Error::LengthMismatch { .. })));
    }
}
