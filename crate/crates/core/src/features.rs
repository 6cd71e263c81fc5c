//! Integrated nerve-activity traces and per-window burst features.
//!
//! The rectified signal is fed through a first-order leaky integrator to
//! produce the iSKNA trace; a per-subject threshold (baseline mean plus
//! three standard deviations) turns that trace into burst detections, and
//! each 10-second window is summarized by six scalar features.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{Condition, SampledSignal, SignalError};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("integrator time constant must be positive, got {0}")]
    BadTau(f64),
    #[error("averaging window must cover at least one sample")]
    EmptyAverageWindow,
    #[error("threshold needs at least one baseline value")]
    EmptyBaseline,
    #[error("feature window must cover at least one sample")]
    EmptyFeatureWindow,
    #[error("csv parse error at line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// First-order leaky-integrator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub fs: f64,
    pub tau_s: f64,
}

impl IntegratorConfig {
    pub fn new(fs: f64, tau_s: f64) -> Result<Self, FeatureError> {
        if !(tau_s > 0.0) {
            return Err(FeatureError::BadTau(tau_s));
        }
        Ok(IntegratorConfig { fs, tau_s })
    }

    /// Default 100 ms time constant at the given rate.
    pub fn default_at(fs: f64) -> Self {
        IntegratorConfig { fs, tau_s: 0.1 }
    }

    pub fn decay(&self) -> f64 {
        (-1.0 / (self.fs * self.tau_s)).exp()
    }
}

/// Leaky integral of the rectified signal:
/// `y[n] = a*y[n-1] + (1-a)*|x[n]|` with `a = exp(-1/(fs*tau))`, `y[-1] = 0`.
pub fn iskna_values(x: &[f64], cfg: IntegratorConfig) -> Vec<f64> {
    let a = cfg.decay();
    let b = 1.0 - a;
    let mut y = Vec::with_capacity(x.len());
    let mut state = 0.0;
    for &v in x {
        state = a * state + b * v.abs();
        y.push(state);
    }
    y
}

/// [`iskna_values`] applied to a full signal, preserving period labels.
pub fn iskna(sig: &SampledSignal, tau_s: f64) -> Result<SampledSignal, FeatureError> {
    let cfg = IntegratorConfig::new(sig.fs, tau_s)?;
    Ok(sig.with_samples(iskna_values(&sig.samples, cfg))?)
}

/// Centered moving average of the integrated trace over `window_s` seconds
/// (shrinking window at the edges). Used for display traces only.
pub fn askna(sig: &SampledSignal, window_s: f64) -> Result<SampledSignal, FeatureError> {
    let k = (window_s * sig.fs).round() as usize;
    if k == 0 {
        return Err(FeatureError::EmptyAverageWindow);
    }
    let n = sig.samples.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in &sig.samples {
        acc += v;
        prefix.push(acc);
    }
    let left = (k - 1) / 2;
    let right = k / 2;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(left);
        let hi = (i + right + 1).min(n);
        out.push((prefix[hi] - prefix[lo]) / (hi - lo) as f64);
    }
    Ok(sig.with_samples(out)?)
}

/// Which processing stage a feature row was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalType {
    /// Conventional band-pass-filtered signal (no learned denoising).
    Bpf,
    /// Autoencoder reconstruction.
    Recon,
    /// Uncontaminated reference.
    Clean,
}

impl SignalType {
    pub fn as_str(self) -> &'static str {
        match self {
            SignalType::Bpf => "bpf",
            SignalType::Recon => "recon",
            SignalType::Clean => "clean",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bpf" => Some(SignalType::Bpf),
            "recon" => Some(SignalType::Recon),
            "clean" => Some(SignalType::Clean),
            _ => None,
        }
    }

    pub const ALL: [SignalType; 3] = [SignalType::Bpf, SignalType::Recon, SignalType::Clean];
}

impl fmt::Display for SignalType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-subject, per-stage burst detection threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstThreshold {
    pub subject: String,
    pub signal_type: SignalType,
    pub source_mean: f64,
    pub source_std: f64,
    /// `source_mean + 3 * source_std`.
    pub value: f64,
}

/// Threshold from the pooled baseline-period integrated values of one
/// subject and stage, before any windowing.
pub fn burst_threshold(
    baseline_iskna: &[f64],
    subject: &str,
    signal_type: SignalType,
) -> Result<BurstThreshold, FeatureError> {
    if baseline_iskna.is_empty() {
        return Err(FeatureError::EmptyBaseline);
    }
    let n = baseline_iskna.len() as f64;
    let mean = baseline_iskna.iter().sum::<f64>() / n;
    let var = baseline_iskna
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    Ok(BurstThreshold {
        subject: subject.to_string(),
        signal_type,
        source_mean: mean,
        source_std: std,
        value: mean + 3.0 * std,
    })
}

pub const FEATURE_NAMES: [&str; 6] = [
    "burst_count",
    "burst_duration",
    "burst_amplitude",
    "burst_total_area",
    "mean_iskna",
    "std_iskna",
];

/// One feature window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub subject: String,
    pub signal_type: SignalType,
    pub condition: Condition,
    pub window_index: usize,
    /// Bursts per minute.
    pub burst_count: f64,
    /// Percent of window time above threshold.
    pub burst_duration: f64,
    /// Mean over bursts of the within-burst peak (μV); 0 when no bursts.
    pub burst_amplitude: f64,
    /// Area above threshold in μV·min.
    pub burst_total_area: f64,
    pub mean_iskna: f64,
    pub std_iskna: f64,
}

impl FeatureRow {
    pub fn feature(&self, name: &str) -> Option<f64> {
        match name {
            "burst_count" => Some(self.burst_count),
            "burst_duration" => Some(self.burst_duration),
            "burst_amplitude" => Some(self.burst_amplitude),
            "burst_total_area" => Some(self.burst_total_area),
            "mean_iskna" => Some(self.mean_iskna),
            "std_iskna" => Some(self.std_iskna),
            _ => None,
        }
    }

    pub fn vector(&self) -> [f64; 6] {
        [
            self.burst_count,
            self.burst_duration,
            self.burst_amplitude,
            self.burst_total_area,
            self.mean_iskna,
            self.std_iskna,
        ]
    }
}

pub const FEATURE_CSV_HEADER: &str = "subject,signal_type,condition,window_index,burst_count,burst_duration,burst_amplitude,burst_total_area,mean_iskna,std_iskna";

/// Collected feature rows; serializes to a stable CSV layout.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn extend(&mut self, other: FeatureTable) {
        self.rows.extend(other.rows);
    }

    /// Rows matching a predicate, borrowed.
    pub fn filter<'a>(
        &'a self,
        mut pred: impl FnMut(&FeatureRow) -> bool + 'a,
    ) -> impl Iterator<Item = &'a FeatureRow> + 'a {
        self.rows.iter().filter(move |r| pred(r))
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<(), FeatureError> {
        writeln!(w, "{FEATURE_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                r.subject,
                r.signal_type,
                r.condition,
                r.window_index,
                r.burst_count,
                r.burst_duration,
                r.burst_amplitude,
                r.burst_total_area,
                r.mean_iskna,
                r.std_iskna,
            )?;
        }
        Ok(())
    }

    /// Reads the layout written by [`FeatureTable::write_csv`]. Empty lines
    /// and `#`-prefixed comment lines (provenance headers) are skipped.
    pub fn read_csv(r: impl BufRead) -> Result<FeatureTable, FeatureError> {
        let mut rows = Vec::new();
        let mut lines = r.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, line)) => {
                    let line = line?;
                    let t = line.trim();
                    if t.is_empty() || t.starts_with('#') {
                        continue;
                    }
                    break line;
                }
                None => {
                    return Err(FeatureError::Csv {
                        line: 1,
                        reason: "no header line".into(),
                    })
                }
            }
        };
        if header.trim() != FEATURE_CSV_HEADER {
            return Err(FeatureError::Csv {
                line: 1,
                reason: format!("unexpected header '{header}'"),
            });
        }
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let err = |reason: &str| FeatureError::Csv {
                line: idx + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 10 {
                return Err(err(&format!("expected 10 fields, got {}", fields.len())));
            }
            let signal_type =
                SignalType::parse(fields[1]).ok_or_else(|| err("bad signal_type"))?;
            let condition = match fields[2] {
                "baseline" => Condition::Baseline,
                "stimulation" => Condition::Stimulation,
                _ => return Err(err("bad condition")),
            };
            let num = |s: &str, what: &str| -> Result<f64, FeatureError> {
                s.parse::<f64>().map_err(|_| err(&format!("bad {what}")))
            };
            rows.push(FeatureRow {
                subject: fields[0].to_string(),
                signal_type,
                condition,
                window_index: fields[3]
                    .parse::<usize>()
                    .map_err(|_| err("bad window_index"))?,
                burst_count: num(fields[4], "burst_count")?,
                burst_duration: num(fields[5], "burst_duration")?,
                burst_amplitude: num(fields[6], "burst_amplitude")?,
                burst_total_area: num(fields[7], "burst_total_area")?,
                mean_iskna: num(fields[8], "mean_iskna")?,
                std_iskna: num(fields[9], "std_iskna")?,
            });
        }
        Ok(FeatureTable { rows })
    }
}

/// Burst summary of one complete window of integrated values.
fn window_features(window: &[f64], thr: f64, fs: f64) -> [f64; 6] {
    let n = window.len();
    let window_s = n as f64 / fs;
    let mut run_count = 0usize;
    let mut above = 0usize;
    let mut area = 0.0f64;
    let mut peak_sum = 0.0f64;
    let mut run_peak = f64::NEG_INFINITY;
    let mut in_run = false;
    for &v in window {
        if v > thr {
            if !in_run {
                in_run = true;
                run_count += 1;
                run_peak = v;
            } else if v > run_peak {
                run_peak = v;
            }
            above += 1;
            area += v - thr;
        } else if in_run {
            in_run = false;
            peak_sum += run_peak;
        }
    }
    if in_run {
        peak_sum += run_peak;
    }
    let mean = window.iter().sum::<f64>() / n as f64;
    let var = window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    [
        run_count as f64 * 60.0 / window_s,
        100.0 * above as f64 / n as f64,
        if run_count > 0 {
            peak_sum / run_count as f64
        } else {
            0.0
        },
        area * (1.0 / fs) / 60.0,
        mean,
        var.sqrt(),
    ]
}

/// Tiles each labeled period of an integrated trace into complete
/// `window_s`-second windows (incomplete tails dropped) and summarizes
/// each window. Returns an empty table when no period holds a complete
/// window.
pub fn extract_features(
    iskna_sig: &SampledSignal,
    thr: &BurstThreshold,
    window_s: f64,
) -> Result<FeatureTable, FeatureError> {
    let w = (window_s * iskna_sig.fs).round() as usize;
    if w == 0 {
        return Err(FeatureError::EmptyFeatureWindow);
    }
    let mut rows = Vec::new();
    let mut window_index = 0usize;
    for period in &iskna_sig.periods {
        let mut start = period.start;
        while start + w <= period.end {
            let f = window_features(&iskna_sig.samples[start..start + w], thr.value, iskna_sig.fs);
            rows.push(FeatureRow {
                subject: thr.subject.clone(),
                signal_type: thr.signal_type,
                condition: period.condition,
                window_index,
                burst_count: f[0],
                burst_duration: f[1],
                burst_amplitude: f[2],
                burst_total_area: f[3],
                mean_iskna: f[4],
                std_iskna: f[5],
            });
            window_index += 1;
            start += w;
        }
    }
    Ok(FeatureTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Period;

    fn sig(fs: f64, samples: Vec<f64>, periods: Vec<Period>) -> SampledSignal {
        SampledSignal::new(fs, samples, periods).unwrap()
    }

    #[test]
    fn integrator_matches_first_order_step_response() {
        let fs = 200.0;
        let tau = 0.1;
        let c = 3.5;
        let cfg = IntegratorConfig::new(fs, tau).unwrap();
        let y = iskna_values(&vec![c; 400], cfg);
        // After exactly tau seconds the step response reaches c(1 - e^-1).
        let idx = (fs * tau) as usize - 1;
        let expect = c * (1.0 - (-1.0f64).exp());
        assert!(
            (y[idx] - expect).abs() <= 0.01 * expect,
            "got {} want {}",
            y[idx],
            expect
        );
        // Long-run convergence to c.
        assert!((y[399] - c).abs() < 0.05 * c);
        // All-zero input stays zero.
        assert!(iskna_values(&[0.0; 16], cfg).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn integrator_impulse_decays_geometrically() {
        let cfg = IntegratorConfig::new(100.0, 0.05).unwrap();
        let a = cfg.decay();
        let mut x = vec![0.0; 20];
        x[0] = 1.0;
        let y = iskna_values(&x, cfg);
        for i in 1..20 {
            assert!((y[i] - y[i - 1] * a).abs() < 1e-12);
        }
    }

    #[test]
    fn integrator_is_bounded_by_the_input_peak() {
        let cfg = IntegratorConfig::new(64.0, 0.1).unwrap();
        let x: Vec<f64> = (0..256).map(|i| ((i * 37 % 100) as f64 / 50.0) - 1.0).collect();
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let y = iskna_values(&x, cfg);
        assert!(y.iter().all(|&v| v >= 0.0 && v <= peak + 1e-12));
    }

    #[test]
    fn moving_average_kernel_and_linearity() {
        let fs = 2048.0;
        let n = 4096;
        // Kernel covers round(5 s * 2048 Hz) = 10240 samples.
        assert_eq!((5.0f64 * fs).round() as usize, 10240);
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let ys: Vec<f64> = (0..n).map(|i| (i as f64 * 0.11).cos()).collect();
        let sum: Vec<f64> = xs.iter().zip(&ys).map(|(a, b)| a + b).collect();
        let ax = askna(&sig(fs, xs, vec![]), 0.5).unwrap();
        let ay = askna(&sig(fs, ys, vec![]), 0.5).unwrap();
        let asum = askna(&sig(fs, sum, vec![]), 0.5).unwrap();
        for i in 0..n {
            assert!((asum.samples[i] - (ax.samples[i] + ay.samples[i])).abs() < 1e-9);
        }
        // Constant maps to constant, including shrinking edges.
        let c = askna(&sig(fs, vec![2.5; 300], vec![]), 0.05).unwrap();
        assert!(c.samples.iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn threshold_is_mean_plus_three_std() {
        let t = burst_threshold(&[2.0; 50], "s01", SignalType::Clean).unwrap();
        assert_eq!(t.value, 2.0);
        // Two-point set {0.5, 1.5}: mean 1.0, population std 0.5.
        let t = burst_threshold(&[0.5, 1.5], "s01", SignalType::Bpf).unwrap();
        assert!((t.source_mean - 1.0).abs() < 1e-12);
        assert!((t.source_std - 0.5).abs() < 1e-12);
        assert!((t.value - 2.5).abs() < 1e-12);
        // Invariant under reordering.
        let a = burst_threshold(&[1.0, 2.0, 4.0, 8.0], "s", SignalType::Recon).unwrap();
        let b = burst_threshold(&[8.0, 2.0, 1.0, 4.0], "s", SignalType::Recon).unwrap();
        assert_eq!(a.value, b.value);
        assert!(matches!(
            burst_threshold(&[], "s", SignalType::Clean),
            Err(FeatureError::EmptyBaseline)
        ));
    }

    fn thr_at(value: f64) -> BurstThreshold {
        BurstThreshold {
            subject: "s01".into(),
            signal_type: SignalType::Clean,
            source_mean: value,
            source_std: 0.0,
            value,
        }
    }

    #[test]
    fn constant_window_below_threshold_has_no_bursts() {
        let fs = 100.0;
        let samples = vec![1.0; 1000];
        let periods = vec![Period {
            start: 0,
            end: 1000,
            condition: Condition::Baseline,
        }];
        let t = extract_features(&sig(fs, samples, periods), &thr_at(2.0), 10.0).unwrap();
        assert_eq!(t.len(), 1);
        let r = &t.rows[0];
        assert_eq!(r.burst_count, 0.0);
        assert_eq!(r.burst_duration, 0.0);
        assert_eq!(r.burst_amplitude, 0.0);
        assert_eq!(r.burst_total_area, 0.0);
        assert!((r.mean_iskna - 1.0).abs() < 1e-12);
        assert!(r.std_iskna.abs() < 1e-12);
    }

    #[test]
    fn constant_window_above_threshold_is_one_long_burst() {
        let fs = 100.0;
        let thr = 2.0;
        let samples = vec![thr + 6.0; 1000];
        let periods = vec![Period {
            start: 0,
            end: 1000,
            condition: Condition::Stimulation,
        }];
        let t = extract_features(&sig(fs, samples, periods), &thr_at(thr), 10.0).unwrap();
        let r = &t.rows[0];
        assert!((r.burst_count - 6.0).abs() < 1e-12); // one run in 10 s
        assert!((r.burst_duration - 100.0).abs() < 1e-12);
        assert!((r.burst_amplitude - (thr + 6.0)).abs() < 1e-12);
        assert!((r.burst_total_area - 1.0).abs() < 1e-12); // 6 uV * 10 s / 60
    }

    #[test]
    fn rectangular_bursts_match_the_counting_oracle() {
        let fs = 100.0;
        let thr = 1.5;
        let mut samples = vec![0.0; 1000];
        // Three 0.5-s rectangles of height thr+4 inside one 10-s window.
        for start in [100usize, 400, 700] {
            for v in &mut samples[start..start + 50] {
                *v = thr + 4.0;
            }
        }
        let periods = vec![Period {
            start: 0,
            end: 1000,
            condition: Condition::Stimulation,
        }];
        let t = extract_features(&sig(fs, samples.clone(), periods), &thr_at(thr), 10.0).unwrap();
        let r = &t.rows[0];
        // Independent brute-force sample count of the same trace.
        let above = samples.iter().filter(|&&v| v > thr).count();
        assert_eq!(above, 150);
        assert!((r.burst_count - 18.0).abs() < 1e-12);
        assert!((r.burst_duration - 15.0).abs() < 1e-12);
        assert!((r.burst_amplitude - (thr + 4.0)).abs() < 1e-12);
        assert!((r.burst_total_area - 0.1).abs() < 1e-9);
    }

    #[test]
    fn adjacent_runs_split_by_one_sample_count_separately() {
        let fs = 10.0;
        let thr = 0.5;
        let mut samples = vec![0.0; 100];
        for v in &mut samples[10..20] {
            *v = 1.0;
        }
        // One sub-threshold sample, then a second run.
        for v in &mut samples[21..30] {
            *v = 1.0;
        }
        let periods = vec![Period {
            start: 0,
            end: 100,
            condition: Condition::Baseline,
        }];
        let t = extract_features(&sig(fs, samples, periods), &thr_at(thr), 10.0).unwrap();
        assert!((t.rows[0].burst_count - 2.0 * 60.0 / 10.0).abs() < 1e-12);
    }

    #[test]
    fn scaling_input_scales_amplitudes_but_not_counts() {
        let fs = 50.0;
        let k = 3.7;
        let base: Vec<f64> = (0..500)
            .map(|i| ((i as f64 * 0.21).sin() * 0.8).abs() + 0.1)
            .collect();
        let scaled: Vec<f64> = base.iter().map(|v| v * k).collect();
        let periods = vec![Period {
            start: 0,
            end: 500,
            condition: Condition::Baseline,
        }];
        let thr = thr_at(0.6);
        let thr_scaled = thr_at(0.6 * k);
        let a = extract_features(&sig(fs, base, periods.clone()), &thr, 10.0).unwrap();
        let b = extract_features(&sig(fs, scaled, periods), &thr_scaled, 10.0).unwrap();
        assert_eq!(a.len(), b.len());
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.burst_count, rb.burst_count);
            assert_eq!(ra.burst_duration, rb.burst_duration);
            assert!((rb.burst_amplitude - k * ra.burst_amplitude).abs() < 1e-9);
            assert!((rb.burst_total_area - k * ra.burst_total_area).abs() < 1e-9);
            assert!((rb.mean_iskna - k * ra.mean_iskna).abs() < 1e-9);
            assert!((rb.std_iskna - k * ra.std_iskna).abs() < 1e-9);
        }
    }

    #[test]
    fn incomplete_tail_windows_are_dropped() {
        let fs = 10.0;
        // 25 s period -> two complete 10-s windows, 5-s tail dropped.
        let periods = vec![Period {
            start: 0,
            end: 250,
            condition: Condition::Baseline,
        }];
        let t = extract_features(&sig(fs, vec![0.1; 250], periods), &thr_at(1.0), 10.0).unwrap();
        assert_eq!(t.len(), 2);
        // A 5-s period alone yields an empty table.
        let short = vec![Period {
            start: 0,
            end: 50,
            condition: Condition::Baseline,
        }];
        let t = extract_features(&sig(fs, vec![0.1; 50], short), &thr_at(1.0), 10.0).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn csv_round_trip_preserves_rows() {
        let rows = vec![
            FeatureRow {
                subject: "s01".into(),
                signal_type: SignalType::Recon,
                condition: Condition::Stimulation,
                window_index: 0,
                burst_count: 18.0,
                burst_duration: 15.0,
                burst_amplitude: 5.5,
                burst_total_area: 0.1,
                mean_iskna: 0.75,
                std_iskna: 0.25,
            },
            FeatureRow {
                subject: "s02".into(),
                signal_type: SignalType::Bpf,
                condition: Condition::Baseline,
                window_index: 3,
                burst_count: 0.0,
                burst_duration: 0.0,
                burst_amplitude: 0.0,
                burst_total_area: 0.0,
                mean_iskna: 0.5,
                std_iskna: 0.1,
            },
        ];
        let table = FeatureTable { rows };
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(FEATURE_CSV_HEADER));
        let back = FeatureTable::read_csv(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(back, table);
        // Comment lines before the header and between rows are ignored.
        let mut commented = b"# config_hash=abc\n# seed=7\n".to_vec();
        commented.extend_from_slice(&buf);
        commented.extend_from_slice(b"# trailing note\n");
        let back = FeatureTable::read_csv(std::io::BufReader::new(&commented[..])).unwrap();
        assert_eq!(back, table);
        // Foreign header is rejected.
        let bad = b"a,b,c\n1,2,3\n";
        assert!(matches!(
            FeatureTable::read_csv(std::io::BufReader::new(&bad[..])),
            Err(FeatureError::Csv { line: 1, .. })
        ));
    }

    #[test]
    fn clean_synthetic_data_separates_conditions_by_burst_count() {
        use crate::synth::{gen_skna, ProtocolSpec, SubjectProfile};
        let profile = SubjectProfile {
            subject_id: "s01".into(),
            baseline_burst_rate: 4.0,
            stim_burst_rate: 16.0,
            burst_amp_mean: 6.0,
            burst_dur_mean: 0.3,
            noise_floor_amp: 1.0,
            seed: 11,
        };
        let protocol = ProtocolSpec::default();
        let clean = gen_skna(&profile, &protocol).unwrap();
        let integrated = iskna(&clean, 0.1).unwrap();
        let baseline: Vec<f64> = integrated
            .periods
            .iter()
            .filter(|p| p.condition == Condition::Baseline)
            .flat_map(|p| integrated.period_slice(p).to_vec())
            .collect();
        let thr = burst_threshold(&baseline, "s01", SignalType::Clean).unwrap();
        let table = extract_features(&integrated, &thr, 10.0).unwrap();
        let mean_count = |cond: Condition| {
            let vals: Vec<f64> = table
                .filter(|r| r.condition == cond)
                .map(|r| r.burst_count)
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        assert!(
            mean_count(Condition::Stimulation) > mean_count(Condition::Baseline),
            "stimulation windows must show more bursts"
        );
    }
}
