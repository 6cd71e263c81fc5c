//! Small FFT-backed spectral helpers: a plain periodogram and a real-signal
//! spectral shaping primitive used by the noise generator.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// One-sided periodogram. Returns (frequencies in Hz, power per bin), with
/// bin k at `k * fs / n` for k in `0 ..= n/2`.
pub fn periodogram(x: &[f64], fs: f64) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let mut freqs = Vec::with_capacity(half + 1);
    let mut power = Vec::with_capacity(half + 1);
    let scale = 1.0 / (n as f64 * n as f64);
    for (k, v) in buf.iter().take(half + 1).enumerate() {
        freqs.push(k as f64 * fs / n as f64);
        // Fold the negative-frequency half into the one-sided estimate.
        let two_sided = v.norm_sqr() * scale;
        let folded = if k == 0 || (n % 2 == 0 && k == half) {
            two_sided
        } else {
            2.0 * two_sided
        };
        power.push(folded);
    }
    (freqs, power)
}

/// Total power of the periodogram bins whose frequency lies in [lo, hi].
pub fn band_power(freqs: &[f64], power: &[f64], lo_hz: f64, hi_hz: f64) -> f64 {
    freqs
        .iter()
        .zip(power)
        .filter(|(f, _)| **f >= lo_hz && **f <= hi_hz)
        .map(|(_, p)| *p)
        .sum()
}

/// Multiplies the spectrum of a real signal by a real, frequency-dependent
/// amplitude weight and transforms back. Conjugate symmetry is enforced, so
/// the output is real. The weight is evaluated at non-negative frequencies.
pub fn shape_spectrum(x: &[f64], fs: f64, weight: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    for k in 0..=half {
        let f = k as f64 * fs / n as f64;
        let w = weight(f);
        buf[k] *= w;
        if k != 0 && !(n % 2 == 0 && k == half) {
            buf[n - k] = buf[k].conj();
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|v| v.re * scale).collect()
}
