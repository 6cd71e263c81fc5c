//! Preprocessing chain: zero-phase IIR filtering (Butterworth band-pass and
//! IIR notch as second-order-section cascades), polyphase rational
//! resampling with a Kaiser-windowed anti-alias low-pass, period-aware
//! segmentation, and global z-score normalization.

use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::signal::{Period, SampledSignal, SegmentSet};

#[derive(Debug, Error)]
pub enum DspError {
    #[error("band edges must satisfy 0 < {lo} < {hi} < fs/2 = {nyquist}")]
    BadBand { lo: f64, hi: f64, nyquist: f64 },
    #[error("notch frequency {f0} must lie in (0, fs/2 = {nyquist}) with positive q, got q = {q}")]
    BadNotch { f0: f64, q: f64, nyquist: f64 },
    #[error("filter order must be positive")]
    ZeroOrder,
    #[error("signal of {len} samples is too short for zero-phase padding of {padlen}")]
    TooShort { len: usize, padlen: usize },
    #[error("target rate {0} must be positive and finite")]
    BadTargetRate(f64),
    #[error("rate ratio {0} has no rational approximation within tolerance")]
    IrrationalRatio(f64),
    #[error("window of {window_s} s is not positive or does not fit the rate {fs}")]
    BadWindow { window_s: f64, fs: f64 },
    #[error("overlap must be 0.0 or 0.5, got {0}")]
    BadOverlap(f64),
    #[error("cannot fit normalization: segment set is empty")]
    EmptyFit,
    #[error("cannot fit normalization: pooled standard deviation is zero")]
    ZeroSpread,
    #[error("signal error: {0}")]
    Signal(#[from] crate::signal::SignalError),
    #[error("segment error: {0}")]
    Segment(#[from] crate::signal::SegmentSetError),
}

// ---------------------------------------------------------------------------
// Second-order sections and zero-phase filtering
// ---------------------------------------------------------------------------

/// One direct-form biquad, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

/// A cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

impl Sos {
    /// Filter order implied by the cascade.
    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }

    /// Magnitude response |H(f)| of a single pass at the given frequencies.
    pub fn magnitude(&self, freqs_hz: &[f64], fs: f64) -> Vec<f64> {
        freqs_hz
            .iter()
            .map(|&f| {
                let w = 2.0 * std::f64::consts::PI * f / fs;
                let z1 = Complex64::from_polar(1.0, -w);
                let z2 = z1 * z1;
                let mut h = Complex64::new(1.0, 0.0);
                for s in &self.sections {
                    let num = Complex64::new(s.b0, 0.0) + z1 * s.b1 + z2 * s.b2;
                    let den = Complex64::new(1.0, 0.0) + z1 * s.a1 + z2 * s.a2;
                    h *= num / den;
                }
                h.norm()
            })
            .collect()
    }
}

/// Butterworth analog low-pass prototype poles (unit cutoff, gain 1).
fn butter_prototype(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

/// Designs a Butterworth band-pass as second-order sections via the analog
/// prototype, low-pass-to-band-pass transform and the bilinear transform.
/// `order` is the prototype order; the resulting filter has `2 * order`
/// poles, i.e. `order` biquad sections.
pub fn butter_bandpass(order: usize, lo_hz: f64, hi_hz: f64, fs: f64) -> Result<Sos, DspError> {
    if order == 0 {
        return Err(DspError::ZeroOrder);
    }
    let nyquist = fs / 2.0;
    if !(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < nyquist) {
        return Err(DspError::BadBand {
            lo: lo_hz,
            hi: hi_hz,
            nyquist,
        });
    }

    // Pre-warped analog band edges for the bilinear transform.
    let fs2 = 2.0 * fs;
    let w1 = fs2 * (std::f64::consts::PI * lo_hz / fs).tan();
    let w2 = fs2 * (std::f64::consts::PI * hi_hz / fs).tan();
    let w0 = (w1 * w2).sqrt();
    let bw = w2 - w1;

    // Low-pass -> band-pass in the s-plane: each prototype pole maps to a
    // pair, and `order` zeros appear at s = 0.
    let mut analog_poles = Vec::with_capacity(2 * order);
    for p in butter_prototype(order) {
        let s = p * (bw / 2.0);
        let d = (s * s - Complex64::new(w0 * w0, 0.0)).sqrt();
        analog_poles.push(s + d);
        analog_poles.push(s - d);
    }
    let analog_gain = bw.powi(order as i32);

    // Bilinear transform: s -> 2fs (z-1)/(z+1).
    let digital_poles: Vec<Complex64> = analog_poles
        .iter()
        .map(|&p| (Complex64::new(fs2, 0.0) + p) / (Complex64::new(fs2, 0.0) - p))
        .collect();
    // Analog zeros at s = 0 map to z = +1; the remaining `order` zeros land
    // at z = -1. Gain: k * prod(fs2 - zeros) / prod(fs2 - poles), zeros at 0.
    let num: Complex64 = Complex64::new(fs2.powi(order as i32), 0.0);
    let den: Complex64 = analog_poles
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, &p| {
            acc * (Complex64::new(fs2, 0.0) - p)
        });
    let digital_gain = (num / den * analog_gain).re;

    // Pair conjugate poles into sections; each section takes one zero at +1
    // and one at -1, so the numerator is proportional to (1, 0, -1).
    let mut upper: Vec<Complex64> = digital_poles.iter().copied().filter(|p| p.im > 1e-12).collect();
    let mut real: Vec<f64> = digital_poles
        .iter()
        .filter(|p| p.im.abs() <= 1e-12)
        .map(|p| p.re)
        .collect();
    upper.sort_by(|a, b| {
        (b.norm(), b.re)
            .partial_cmp(&(a.norm(), a.re))
            .expect("finite poles")
    });
    real.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).expect("finite poles"));

    let n_sections = order;
    let section_gain = if digital_gain > 0.0 {
        digital_gain.powf(1.0 / n_sections as f64)
    } else {
        // Keep the magnitude spread even and the sign on the first section.
        digital_gain.abs().powf(1.0 / n_sections as f64)
    };
    let mut sections = Vec::with_capacity(n_sections);
    for p in upper {
        sections.push(Biquad {
            b0: section_gain,
            b1: 0.0,
            b2: -section_gain,
            a1: -2.0 * p.re,
            a2: p.norm_sqr(),
        });
    }
    for pair in real.chunks(2) {
        if pair.len() == 2 {
            sections.push(Biquad {
                b0: section_gain,
                b1: 0.0,
                b2: -section_gain,
                a1: -(pair[0] + pair[1]),
                a2: pair[0] * pair[1],
            });
        }
    }
    if digital_gain < 0.0 {
        if let Some(first) = sections.first_mut() {
            first.b0 = -first.b0;
            first.b2 = -first.b2;
        }
    }
    Ok(Sos { sections })
}

/// Designs a single-section IIR notch at `f0_hz` with quality factor `q`.
pub fn iir_notch(f0_hz: f64, q: f64, fs: f64) -> Result<Sos, DspError> {
    let nyquist = fs / 2.0;
    if !(f0_hz > 0.0 && f0_hz < nyquist && q > 0.0) {
        return Err(DspError::BadNotch {
            f0: f0_hz,
            q,
            nyquist,
        });
    }
    let w0 = 2.0 * std::f64::consts::PI * f0_hz / fs;
    let beta = (w0 / q / 2.0).tan();
    let gain = 1.0 / (1.0 + beta);
    let cos_w0 = w0.cos();
    Ok(Sos {
        sections: vec![Biquad {
            b0: gain,
            b1: -2.0 * cos_w0 * gain,
            b2: gain,
            a1: -2.0 * cos_w0 * gain,
            a2: 2.0 * gain - 1.0,
        }],
    })
}

/// Runs one biquad over `x` in place, direct form II transposed, with the
/// initial state set to the steady-state response for a step of `x[0]` to
/// minimize the startup transient.
fn biquad_inplace(x: &mut [f64], s: &Biquad) {
    let a_sum = 1.0 + s.a1 + s.a2;
    let dc_gain = if a_sum.abs() > 1e-12 {
        (s.b0 + s.b1 + s.b2) / a_sum
    } else {
        0.0
    };
    let x0 = x.first().copied().unwrap_or(0.0);
    let mut z2 = (s.b2 - s.a2 * dc_gain) * x0;
    let mut z1 = (s.b1 + s.b2 - (s.a1 + s.a2) * dc_gain) * x0;
    for v in x.iter_mut() {
        let xn = *v;
        let y = s.b0 * xn + z1;
        z1 = s.b1 * xn - s.a1 * y + z2;
        z2 = s.b2 * xn - s.a2 * y;
        *v = y;
    }
}

/// Zero-phase filtering: forward pass, time reversal, second pass, reversal.
/// The input is extended on both ends by an odd reflection of three times
/// the filter order before filtering, and the extension is trimmed after.
pub fn filtfilt(sos: &Sos, x: &[f64]) -> Result<Vec<f64>, DspError> {
    let padlen = 3 * sos.order();
    if x.len() <= padlen {
        return Err(DspError::TooShort {
            len: x.len(),
            padlen,
        });
    }
    let n = x.len();
    let mut ext = Vec::with_capacity(n + 2 * padlen);
    let first = x[0];
    let last = x[n - 1];
    for i in (1..=padlen).rev() {
        ext.push(2.0 * first - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 0..padlen {
        ext.push(2.0 * last - x[n - 2 - i]);
    }

    for s in &sos.sections {
        biquad_inplace(&mut ext, s);
    }
    ext.reverse();
    for s in &sos.sections {
        biquad_inplace(&mut ext, s);
    }
    ext.reverse();
    Ok(ext[padlen..padlen + n].to_vec())
}

/// Zero-phase 4th-order Butterworth band-pass over a signal.
pub fn bandpass_filter(sig: &SampledSignal, lo_hz: f64, hi_hz: f64) -> Result<SampledSignal, DspError> {
    let sos = butter_bandpass(4, lo_hz, hi_hz, sig.fs)?;
    let samples = filtfilt(&sos, &sig.samples)?;
    Ok(sig.with_samples(samples)?)
}

/// Zero-phase second-order notch over a signal.
pub fn notch_filter(sig: &SampledSignal, f0_hz: f64, q: f64) -> Result<SampledSignal, DspError> {
    let sos = iir_notch(f0_hz, q, sig.fs)?;
    let samples = filtfilt(&sos, &sig.samples)?;
    Ok(sig.with_samples(samples)?)
}

// ---------------------------------------------------------------------------
// Polyphase rational resampling
// ---------------------------------------------------------------------------

/// Half-length of the anti-alias kernel, in multiples of max(up, down).
const KERNEL_HALF_FACTOR: usize = 18;
/// Kaiser window shape parameter for the anti-alias kernel.
const KAISER_BETA: f64 = 6.0;
/// Cutoff of the anti-alias low-pass relative to the narrower Nyquist band.
const CUTOFF_SCALE: f64 = 0.96;

/// Best rational approximation p/q to `ratio` with q bounded, by continued
/// fractions. Exact for ratios of whole-Hz rates.
fn rational_ratio(ratio: f64) -> Result<(u64, u64), DspError> {
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(DspError::IrrationalRatio(ratio));
    }
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut x = ratio;
    for _ in 0..64 {
        let a = x.floor();
        if a > u64::MAX as f64 / 2.0 {
            break;
        }
        let a_int = a as u64;
        let h2 = a_int.checked_mul(h1).and_then(|v| v.checked_add(h0));
        let k2 = a_int.checked_mul(k1).and_then(|v| v.checked_add(k0));
        let (h2, k2) = match (h2, k2) {
            (Some(h), Some(k)) if k <= 1_000_000 => (h, k),
            _ => break,
        };
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
        let frac = x - a;
        if frac.abs() < 1e-12 || (h1 as f64 / k1 as f64 - ratio).abs() <= 1e-9 * ratio {
            break;
        }
        x = 1.0 / frac;
    }
    if k1 == 0 || (h1 as f64 / k1 as f64 - ratio).abs() > 1e-9 * ratio {
        return Err(DspError::IrrationalRatio(ratio));
    }
    Ok((h1, k1))
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-18 {
            break;
        }
    }
    sum
}

struct PolyphaseKernel {
    /// Centered taps h[-half ..= half] at the upsampled rate.
    taps: Vec<f64>,
    half: i64,
    /// Per-branch tap sums for exact DC transparency, indexed by residue
    /// of the tap position modulo `up`.
    branch_sums: Vec<f64>,
}

fn design_kernel(up: u64, down: u64) -> PolyphaseKernel {
    let widest = up.max(down) as f64;
    let half = (KERNEL_HALF_FACTOR as u64 * up.max(down)) as i64;
    let cutoff = CUTOFF_SCALE / widest;
    let i0_beta = bessel_i0(KAISER_BETA);
    let mut taps = Vec::with_capacity((2 * half + 1) as usize);
    for j in -half..=half {
        let t = j as f64;
        let sinc = if j == 0 {
            1.0
        } else {
            (std::f64::consts::PI * cutoff * t).sin() / (std::f64::consts::PI * cutoff * t)
        };
        let frac = t / half as f64;
        let window = bessel_i0(KAISER_BETA * (1.0 - frac * frac).max(0.0).sqrt()) / i0_beta;
        taps.push(cutoff * sinc * window);
    }
    let mut branch_sums = vec![0.0; up as usize];
    for (idx, &h) in taps.iter().enumerate() {
        let j = idx as i64 - half;
        let r = j.rem_euclid(up as i64) as usize;
        branch_sums[r] += h;
    }
    PolyphaseKernel {
        taps,
        half,
        branch_sums,
    }
}

/// Resamples to `fs_out` by polyphase up/down conversion. Output length is
/// `round(n * fs_out / fs_in)`; period boundaries are rescaled by the same
/// rational ratio. A unity ratio returns the input unchanged apart from the
/// recorded rate.
pub fn resample(sig: &SampledSignal, fs_out: f64) -> Result<SampledSignal, DspError> {
    if !(fs_out.is_finite() && fs_out > 0.0) {
        return Err(DspError::BadTargetRate(fs_out));
    }
    let (up, down) = rational_ratio(fs_out / sig.fs)?;
    if up == down {
        let mut out = sig.clone();
        out.fs = fs_out;
        return Ok(out);
    }

    let n_in = sig.samples.len() as u64;
    let n_out = ((n_in as u128 * up as u128 + down as u128 / 2) / down as u128) as usize;
    let kernel = design_kernel(up, down);
    let x = &sig.samples;
    let mut out = vec![0.0f64; n_out];
    let up_i = up as i64;
    let down_i = down as i64;
    let half = kernel.half;
    for (m, y) in out.iter_mut().enumerate() {
        let center = m as i64 * down_i;
        // Input samples n with |center - n*up| <= half contribute.
        let n_lo = ((center - half) + up_i - 1).div_euclid(up_i).max(0);
        let n_hi = ((center + half).div_euclid(up_i)).min(n_in as i64 - 1);
        let mut acc = 0.0;
        for n in n_lo..=n_hi {
            let j = center - n * up_i;
            acc += kernel.taps[(j + half) as usize] * x[n as usize];
        }
        let branch = center.rem_euclid(up_i) as usize;
        *y = acc / kernel.branch_sums[branch];
    }

    let rescale = |s: usize| -> usize {
        let v = (s as u128 * up as u128 + down as u128 / 2) / down as u128;
        (v as usize).min(n_out)
    };
    let periods = sig
        .periods
        .iter()
        .map(|p| Period {
            start: rescale(p.start),
            end: rescale(p.end),
            condition: p.condition,
        })
        .collect();
    Ok(SampledSignal::new(fs_out, out, periods)?)
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

/// Cuts fixed-length windows from each labelled period. Windows tile a
/// period with stride `window * (1 - overlap)`; any window that would cross
/// a period boundary is discarded. Segments inherit the period's condition
/// and record their absolute start sample.
pub fn segment(
    sig: &SampledSignal,
    subject: &str,
    window_s: f64,
    overlap: f64,
) -> Result<SegmentSet, DspError> {
    if !(window_s > 0.0) || !(window_s * sig.fs).is_finite() {
        return Err(DspError::BadWindow {
            window_s,
            fs: sig.fs,
        });
    }
    if overlap != 0.0 && overlap != 0.5 {
        return Err(DspError::BadOverlap(overlap));
    }
    let window = (window_s * sig.fs).round() as usize;
    if window == 0 {
        return Err(DspError::BadWindow {
            window_s,
            fs: sig.fs,
        });
    }
    let stride = ((window as f64) * (1.0 - overlap)).round() as usize;
    let mut set = SegmentSet::new(sig.fs, window, overlap);
    for p in &sig.periods {
        if p.len() < window {
            continue;
        }
        let mut start = p.start;
        while start + window <= p.end {
            set.push(subject, p.condition, start, &sig.samples[start..start + window])?;
            start += stride;
        }
    }
    Ok(set)
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Global z-score parameters fitted on pooled training samples.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    pub fn new(mean: f64, std: f64) -> Result<Self, DspError> {
        if !(std > 0.0) || !mean.is_finite() || !std.is_finite() {
            return Err(DspError::ZeroSpread);
        }
        Ok(NormStats { mean, std })
    }
}

/// Fits one global (mean, population std) pair over all samples of the set.
pub fn normalize_fit(set: &SegmentSet) -> Result<NormStats, DspError> {
    let values = set.values();
    if values.is_empty() {
        return Err(DspError::EmptyFit);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    NormStats::new(mean, std)
}

/// Applies z-scoring in place.
pub fn normalize_apply(set: &mut SegmentSet, stats: &NormStats) {
    for v in set.values_mut() {
        *v = (*v - stats.mean) / stats.std;
    }
}

/// Inverts z-scoring on a raw slice.
pub fn denormalize_slice(x: &mut [f64], stats: &NormStats) {
    for v in x.iter_mut() {
        *v = *v * stats.std + stats.mean;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{Condition, Period, SampledSignal};

    fn sine(f: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin())
            .collect()
    }

    #[test]
    fn bandpass_rejects_bad_edges() {
        assert!(matches!(
            butter_bandpass(4, 500.0, 1000.0, 1800.0),
            Err(DspError::BadBand { .. })
        ));
        assert!(matches!(
            butter_bandpass(4, 0.0, 1000.0, 10_000.0),
            Err(DspError::BadBand { .. })
        ));
        assert!(matches!(
            butter_bandpass(4, 900.0, 500.0, 10_000.0),
            Err(DspError::BadBand { .. })
        ));
    }

    #[test]
    fn bandpass_magnitude_matches_reference_design() {
        // Reference single-pass magnitudes for a 4th-order prototype
        // (8-pole) Butterworth band-pass, 500-1000 Hz at 10 kHz.
        let sos = butter_bandpass(4, 500.0, 1000.0, 10_000.0).unwrap();
        let mags = sos.magnitude(&[50.0, 250.0, 500.0, 707.1, 750.0, 1000.0, 1500.0, 2000.0], 10_000.0);
        let expected = [
            6.808374e-6,
            7.027085e-3,
            7.071068e-1,
            1.000000e0,
            9.999998e-1,
            7.071068e-1,
            2.760476e-2,
            4.160749e-3,
        ];
        for (got, want) in mags.iter().zip(expected) {
            assert!(
                (got - want).abs() <= 1e-6 * want + 1e-9,
                "got {got}, want {want}"
            );
        }
    }

    #[test]
    fn bandpass_gain_in_band_and_rejection_out_of_band() {
        // Double-pass (zero-phase) gain: passband >= 0.9, 50 Hz <= -40 dB.
        let sos = butter_bandpass(4, 500.0, 1000.0, 10_000.0).unwrap();
        let mags = sos.magnitude(&[750.0, 50.0], 10_000.0);
        let double_pass_750 = mags[0] * mags[0];
        let double_pass_50 = mags[1] * mags[1];
        assert!(double_pass_750 >= 0.9, "750 Hz gain {double_pass_750}");
        assert!(
            20.0 * double_pass_50.log10() <= -40.0,
            "50 Hz gain {double_pass_50}"
        );
    }

    #[test]
    fn filtered_sine_amplitudes_follow_the_response() {
        let fs = 10_000.0;
        let n = 20_000;
        let sig = SampledSignal::new(fs, sine(750.0, fs, n), vec![]).unwrap();
        let out = bandpass_filter(&sig, 500.0, 1000.0).unwrap();
        // Measure amplitude in the middle third, past any edge transient.
        let mid = &out.samples[n / 3..2 * n / 3];
        let amp = mid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(amp >= 0.9, "in-band amplitude {amp}");

        let sig = SampledSignal::new(fs, sine(50.0, fs, n), vec![]).unwrap();
        let out = bandpass_filter(&sig, 500.0, 1000.0).unwrap();
        let mid = &out.samples[n / 3..2 * n / 3];
        let amp = mid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(amp <= 0.01, "out-of-band amplitude {amp}");
    }

    #[test]
    fn notch_magnitude_matches_reference_design() {
        // Reference single-pass magnitudes for a notch at 762 Hz, q = 35,
        // fs = 10 kHz.
        let sos = iir_notch(762.0, 35.0, 10_000.0).unwrap();
        let mags = sos.magnitude(&[100.0, 700.0, 755.0, 762.0, 770.0, 1000.0], 10_000.0);
        let expected = [
            9.999924e-1,
            9.860763e-1,
            5.424976e-1,
            0.0,
            5.903372e-1,
            9.986925e-1,
        ];
        for (got, want) in mags.iter().zip(expected) {
            assert!((got - want).abs() <= 2e-6, "got {got}, want {want}");
        }
    }

    #[test]
    fn notch_kills_center_and_spares_neighbours() {
        let fs = 10_000.0;
        let n = 40_000;
        let sig = SampledSignal::new(fs, sine(762.0, fs, n), vec![]).unwrap();
        let out = notch_filter(&sig, 762.0, 35.0).unwrap();
        let mid = &out.samples[n / 3..2 * n / 3];
        let amp = mid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(amp <= 1e-3, "residual 762 Hz amplitude {amp}");

        let sig = SampledSignal::new(fs, sine(700.0, fs, n), vec![]).unwrap();
        let out = notch_filter(&sig, 762.0, 35.0).unwrap();
        let mid = &out.samples[n / 3..2 * n / 3];
        let amp = mid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(amp >= 0.95, "700 Hz amplitude {amp}");
    }

    #[test]
    fn zero_phase_filtering_keeps_symmetric_pulses_symmetric() {
        let fs = 10_000.0;
        let n = 4001;
        let center = n / 2;
        let mut pulse = vec![0.0; n];
        for i in 0..n {
            let d = (i as f64 - center as f64) / 20.0;
            pulse[i] = (-0.5 * d * d).exp();
        }
        let sos = butter_bandpass(4, 500.0, 1000.0, fs).unwrap();
        let y = filtfilt(&sos, &pulse).unwrap();
        let energy: f64 = y.iter().map(|v| v * v).sum();
        // Energy of the asymmetric part, comparing mirrored samples.
        let skew: f64 = (0..center)
            .map(|i| (y[center - i] - y[center + i]).powi(2))
            .sum();
        assert!(skew <= 1e-6 * energy, "skew {skew} vs energy {energy}");
    }

    #[test]
    fn filtfilt_rejects_short_inputs() {
        let sos = butter_bandpass(4, 500.0, 1000.0, 10_000.0).unwrap();
        let err = filtfilt(&sos, &[0.0; 10]).unwrap_err();
        assert!(matches!(err, DspError::TooShort { .. }));
    }

    #[test]
    fn resample_preserves_tone_and_length() {
        let fs_in = 10_000.0;
        let n = 100_000;
        let sig = SampledSignal::new(fs_in, sine(100.0, fs_in, n), vec![]).unwrap();
        let out = resample(&sig, 2048.0).unwrap();
        assert_eq!(out.samples.len(), 20_480);
        assert_eq!(out.fs, 2048.0);
        let mid = &out.samples[out.samples.len() / 3..2 * out.samples.len() / 3];
        let amp = mid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((amp - 1.0).abs() <= 0.02, "tone amplitude {amp}");
    }

    #[test]
    fn resample_is_linear() {
        let fs_in = 10_000.0;
        let n = 10_000;
        let a = sine(130.0, fs_in, n);
        let b = sine(311.0, fs_in, n);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x + 0.5 * y).collect();
        let ra = resample(&SampledSignal::new(fs_in, a, vec![]).unwrap(), 2048.0).unwrap();
        let rb = resample(&SampledSignal::new(fs_in, b, vec![]).unwrap(), 2048.0).unwrap();
        let rsum = resample(&SampledSignal::new(fs_in, sum, vec![]).unwrap(), 2048.0).unwrap();
        for i in 0..rsum.samples.len() {
            let lhs = rsum.samples[i];
            let rhs = 2.0 * ra.samples[i] + 0.5 * rb.samples[i];
            assert!((lhs - rhs).abs() <= 1e-9, "index {i}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn resample_passes_constants_through() {
        let fs_in = 10_000.0;
        let n = 10_000;
        let sig = SampledSignal::new(fs_in, vec![3.25; n], vec![]).unwrap();
        let out = resample(&sig, 2048.0).unwrap();
        let m = out.samples.len();
        for (i, v) in out.samples.iter().enumerate().skip(m / 5).take(3 * m / 5) {
            assert!((v - 3.25).abs() <= 1e-6, "index {i}: {v}");
        }
    }

    #[test]
    fn resample_rescales_period_boundaries() {
        let fs_in = 10_000.0;
        let periods = vec![
            Period {
                start: 0,
                end: 50_000,
                condition: Condition::Baseline,
            },
            Period {
                start: 50_000,
                end: 100_000,
                condition: Condition::Stimulation,
            },
        ];
        let sig = SampledSignal::new(fs_in, vec![0.0; 100_000], periods).unwrap();
        let out = resample(&sig, 2048.0).unwrap();
        assert_eq!(out.periods[0].start, 0);
        assert_eq!(out.periods[0].end, 10_240);
        assert_eq!(out.periods[1].start, 10_240);
        assert_eq!(out.periods[1].end, 20_480);
    }

    #[test]
    fn resample_suppresses_frequencies_above_the_target_band() {
        // Linear chirp 0 -> 5 kHz over 10 s at 10 kHz: after resampling to
        // 2048 Hz, spectral content above 0.55 * 2048 = 1126.4 Hz must sit
        // at least 40 dB below the passband level.
        let fs_in = 10_000.0;
        let n = 100_000;
        let chirp: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs_in;
                let phase = 2.0 * std::f64::consts::PI * (0.5 * 500.0 * t * t);
                phase.sin()
            })
            .collect();
        let sig = SampledSignal::new(fs_in, chirp, vec![]).unwrap();
        let out = resample(&sig, 2048.0).unwrap();
        let (freqs, power) = crate::spectrum::periodogram(&out.samples, out.fs);
        let mut pass = 0.0f64;
        let mut stop = 0.0f64;
        for (f, p) in freqs.iter().zip(&power) {
            if *f <= 900.0 && *f >= 100.0 {
                pass = pass.max(*p);
            } else if *f > 0.55 * 2048.0 {
                stop = stop.max(*p);
            }
        }
        let ratio_db = 10.0 * (stop / pass).log10();
        assert!(ratio_db <= -40.0, "stopband leakage {ratio_db} dB");
    }

    #[test]
    fn unity_ratio_is_identity() {
        let sig = SampledSignal::new(2048.0, sine(100.0, 2048.0, 4096), vec![]).unwrap();
        let out = resample(&sig, 2048.0).unwrap();
        assert_eq!(out.samples, sig.samples);
    }

    #[test]
    fn segmentation_counts_without_and_with_overlap() {
        let fs = 100.0;
        let n = 1400;
        let periods = vec![Period {
            start: 0,
            end: n,
            condition: Condition::Baseline,
        }];
        let sig = SampledSignal::new(fs, vec![0.0; n], periods).unwrap();
        let no_overlap = segment(&sig, "s01", 1.0, 0.0).unwrap();
        assert_eq!(no_overlap.len(), 14);
        let half = segment(&sig, "s01", 1.0, 0.5).unwrap();
        assert_eq!(half.len(), 27);
    }

    #[test]
    fn segmentation_discards_boundary_crossing_windows() {
        let fs = 100.0;
        let periods = vec![
            Period {
                start: 0,
                end: 150,
                condition: Condition::Baseline,
            },
            Period {
                start: 150,
                end: 300,
                condition: Condition::Stimulation,
            },
        ];
        let sig = SampledSignal::new(fs, (0..300).map(|i| i as f64).collect(), periods).unwrap();
        let set = segment(&sig, "s01", 1.0, 0.0).unwrap();
        // 1.5 periods of 100-sample windows each: one window per period.
        assert_eq!(set.len(), 2);
        for (meta, _) in set.iter() {
            let end = meta.start + set.window_len;
            assert!(
                (meta.start >= 0 && end <= 150) || (meta.start >= 150 && end <= 300),
                "segment crosses the boundary"
            );
        }
        // A window too long for any period yields an empty set.
        let empty = segment(&sig, "s01", 2.0, 0.0).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn segmentation_rejects_bad_overlap() {
        let sig = SampledSignal::new(100.0, vec![0.0; 100], vec![]).unwrap();
        assert!(matches!(
            segment(&sig, "s01", 1.0, 0.3),
            Err(DspError::BadOverlap(_))
        ));
    }

    #[test]
    fn normalization_round_trip_and_pooled_stats() {
        let mut set = SegmentSet::new(100.0, 2, 0.0);
        set.push("s01", Condition::Baseline, 0, &[-1.0, -1.0]).unwrap();
        set.push("s01", Condition::Baseline, 2, &[1.0, 1.0]).unwrap();
        let stats = normalize_fit(&set).unwrap();
        assert!((stats.mean - 0.0).abs() <= 1e-12);
        assert!((stats.std - 1.0).abs() <= 1e-12);

        let mut scaled = SegmentSet::new(100.0, 2, 0.0);
        scaled
            .push("s01", Condition::Baseline, 0, &[3.0, 5.0])
            .unwrap();
        scaled
            .push("s01", Condition::Baseline, 2, &[7.0, 9.0])
            .unwrap();
        let stats = normalize_fit(&scaled).unwrap();
        let mut z = scaled.clone();
        normalize_apply(&mut z, &stats);
        let refit = normalize_fit(&z).unwrap();
        assert!(refit.mean.abs() <= 1e-9);
        assert!((refit.std - 1.0).abs() <= 1e-9);
        let mut back = z.values().to_vec();
        denormalize_slice(&mut back, &stats);
        for (a, b) in back.iter().zip(scaled.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn normalization_rejects_constant_sets() {
        let mut set = SegmentSet::new(100.0, 2, 0.0);
        set.push("s01", Condition::Baseline, 0, &[2.0, 2.0]).unwrap();
        assert!(matches!(normalize_fit(&set), Err(DspError::ZeroSpread)));
        assert!(matches!(
            normalize_fit(&SegmentSet::new(100.0, 2, 0.0)),
            Err(DspError::EmptyFit)
        ));
    }
}
