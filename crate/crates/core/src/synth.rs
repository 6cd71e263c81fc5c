//! Synthetic data generation: nerve-activity recordings with Poisson burst
//! trains riding on an in-band noise floor, and broadband muscle-noise
//! recordings with intermittent activation epochs.
//!
//! All generation is driven by explicit seeds; a given (profile, protocol)
//! pair always produces bit-identical samples.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::container::{Record, RecordRole, RecordingContainer};
use crate::dsp;
use crate::seeds::derive_seed;
use crate::signal::{Condition, Period, SampledSignal};
use crate::spectrum::shape_spectrum;

/// Frequency band of the simulated nerve activity, Hz.
pub const SKNA_BAND: (f64, f64) = (500.0, 1000.0);

/// Knee of the muscle-noise spectral weight, Hz: power falls off as
/// 1 / (1 + f / knee), broadband but low-frequency-weighted.
const EMG_SPECTRAL_KNEE_HZ: f64 = 200.0;
/// Gain applied to muscle noise outside activation epochs.
const EMG_REST_GAIN: f64 = 0.25;
/// Activation epochs last 2-10 s before duty-cycle scaling.
const EMG_EPOCH_RANGE_S: (f64, f64) = (2.0, 10.0);
/// Scale factors applied to active/rest epoch lengths; 0.8 / (0.8 + 1.2)
/// gives the ~40% activation duty cycle.
const EMG_ACTIVE_SCALE: f64 = 0.8;
const EMG_REST_SCALE: f64 = 1.2;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("profile '{subject}': {field} must be positive, got {value}")]
    BadProfileField {
        subject: String,
        field: &'static str,
        value: f64,
    },
    #[error("protocol needs at least one step with a positive duration")]
    EmptyProtocol,
    #[error("protocol rate {fs} cannot carry the {lo}-{hi} Hz band")]
    BandInfeasible { fs: f64, lo: f64, hi: f64 },
    #[error("dataset needs at least 2 subjects, got {0}")]
    InsufficientSubjects(usize),
    #[error("got {got} profiles for {want} subjects")]
    ProfileCountMismatch { got: usize, want: usize },
    #[error("duration {0} s is not positive")]
    BadDuration(f64),
    #[error(transparent)]
    Dsp(#[from] dsp::DspError),
    #[error(transparent)]
    Signal(#[from] crate::signal::SignalError),
    #[error(transparent)]
    Container(#[from] crate::container::ContainerError),
}

/// Per-subject generation parameters. Burst rates are per minute; the
/// envelope width of a burst is `burst_dur_mean / 3` (standard deviation of
/// the Gaussian envelope), amplitudes are microvolts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub subject_id: String,
    pub baseline_burst_rate: f64,
    pub stim_burst_rate: f64,
    pub burst_amp_mean: f64,
    pub burst_dur_mean: f64,
    pub noise_floor_amp: f64,
    pub seed: u64,
}

impl SubjectProfile {
    fn validate(&self) -> Result<(), SynthError> {
        let fields = [
            ("baseline_burst_rate", self.baseline_burst_rate),
            ("stim_burst_rate", self.stim_burst_rate),
            ("burst_amp_mean", self.burst_amp_mean),
            ("burst_dur_mean", self.burst_dur_mean),
            ("noise_floor_amp", self.noise_floor_amp),
        ];
        for (field, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SynthError::BadProfileField {
                    subject: self.subject_id.clone(),
                    field,
                    value,
                });
            }
        }
        Ok(())
    }

    /// Draws a profile from the default ranges: 1.5-4 baseline and 30-60
    /// stimulation bursts per minute, 5-10 uV burst amplitude, 0.25-0.35 s
    /// burst duration, 0.8-1.2 uV noise floor. The rate ranges are far
    /// apart so that even short analysis windows separate the conditions,
    /// mirroring the pronounced activity increase under sympathetic
    /// stimulation, and baseline bursts are sparse enough that the
    /// baseline-derived detection threshold stays well below burst peaks.
    pub fn random(subject_id: &str, seed: u64) -> SubjectProfile {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SubjectProfile {
            subject_id: subject_id.to_string(),
            baseline_burst_rate: rng.gen_range(1.5..4.0),
            stim_burst_rate: rng.gen_range(30.0..60.0),
            burst_amp_mean: rng.gen_range(5.0..10.0),
            burst_dur_mean: rng.gen_range(0.25..0.35),
            noise_floor_amp: rng.gen_range(0.8..1.2),
            seed,
        }
    }
}

/// Ordered protocol steps (condition, duration in seconds) and the
/// generation sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub fs: f64,
    pub steps: Vec<(Condition, f64)>,
}

impl Default for ProtocolSpec {
    /// Two baseline/stimulation rounds: 120 s baseline, 300 s stimulation,
    /// repeated, at 2048 Hz.
    fn default() -> Self {
        ProtocolSpec {
            fs: 2048.0,
            steps: vec![
                (Condition::Baseline, 120.0),
                (Condition::Stimulation, 300.0),
                (Condition::Baseline, 120.0),
                (Condition::Stimulation, 300.0),
            ],
        }
    }
}

impl ProtocolSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.steps.is_empty() || self.steps.iter().any(|(_, d)| !(*d > 0.0)) {
            return Err(SynthError::EmptyProtocol);
        }
        Ok(())
    }

    /// Period table in samples; each step spans `round(duration * fs)`.
    pub fn periods(&self) -> Vec<Period> {
        let mut out = Vec::with_capacity(self.steps.len());
        let mut cursor = 0usize;
        for (condition, dur) in &self.steps {
            let len = (dur * self.fs).round() as usize;
            out.push(Period {
                start: cursor,
                end: cursor + len,
                condition: *condition,
            });
            cursor += len;
        }
        out
    }

    pub fn total_samples(&self) -> usize {
        self.periods().last().map(|p| p.end).unwrap_or(0)
    }
}

/// Unit-RMS noise restricted to the nerve-activity band.
fn in_band_carrier(n: usize, fs: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, SynthError> {
    if fs / 2.0 <= SKNA_BAND.1 {
        return Err(SynthError::BandInfeasible {
            fs,
            lo: SKNA_BAND.0,
            hi: SKNA_BAND.1,
        });
    }
    let white: Vec<f64> = (0..n).map(|_| gauss(rng)).collect();
    let sos = dsp::butter_bandpass(4, SKNA_BAND.0, SKNA_BAND.1, fs)?;
    let mut filtered = dsp::filtfilt(&sos, &white)?;
    let rms = (filtered.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        for v in &mut filtered {
            *v /= rms;
        }
    }
    Ok(filtered)
}

/// Standard normal draw via Box-Muller (two uniform draws per sample keeps
/// the stream layout independent of any library distribution internals).
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Generates one synthetic nerve-activity recording: an in-band noise floor
/// plus Poisson-timed bursts whose rate tracks the protocol condition. Each
/// burst is a Gaussian envelope multiplying an independent in-band carrier.
pub fn gen_skna(profile: &SubjectProfile, protocol: &ProtocolSpec) -> Result<SampledSignal, SynthError> {
    profile.validate()?;
    protocol.validate()?;
    let fs = protocol.fs;
    let periods = protocol.periods();
    let n = protocol.total_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);

    let background = in_band_carrier(n, fs, &mut rng)?;
    let carrier = in_band_carrier(n, fs, &mut rng)?;

    let sigma_s = profile.burst_dur_mean / 3.0;
    let reach = (4.0 * sigma_s * fs).ceil() as i64;
    let mut envelope = vec![0.0f64; n];
    for p in &periods {
        let rate_per_s = match p.condition {
            Condition::Baseline => profile.baseline_burst_rate,
            Condition::Stimulation => profile.stim_burst_rate,
        } / 60.0;
        let mut t = p.start as f64 / fs;
        let end_t = p.end as f64 / fs;
        loop {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            t += -u.ln() / rate_per_s;
            if t >= end_t {
                break;
            }
            let amp = profile.burst_amp_mean * rng.gen_range(0.75..1.25);
            let center = (t * fs).round() as i64;
            let lo = (center - reach).max(0) as usize;
            let hi = ((center + reach) as usize).min(n.saturating_sub(1));
            for (i, e) in envelope.iter_mut().enumerate().take(hi + 1).skip(lo) {
                let dt = (i as f64 - center as f64) / fs;
                *e += amp * (-0.5 * (dt / sigma_s) * (dt / sigma_s)).exp();
            }
        }
    }

    let samples: Vec<f64> = (0..n)
        .map(|i| profile.noise_floor_amp * background[i] + envelope[i] * carrier[i])
        .collect();
    Ok(SampledSignal::new(fs, samples, periods)?)
}

/// Generates one muscle-noise recording: broadband noise whose power falls
/// off as 1/(1 + f/200 Hz), gated by a square activation wave with ~40%
/// duty and 2-10 s epochs. The output is normalized to unit RMS.
pub fn gen_emg(duration_s: f64, fs: f64, seed: u64) -> Result<SampledSignal, SynthError> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(SynthError::BadDuration(duration_s));
    }
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(SynthError::BadDuration(fs));
    }
    let n = (duration_s * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white: Vec<f64> = (0..n).map(|_| gauss(&mut rng)).collect();
    let mut shaped = shape_spectrum(&white, fs, |f| {
        1.0 / (1.0 + f / EMG_SPECTRAL_KNEE_HZ).sqrt()
    });

    let mut active = rng.gen_bool(0.5);
    let mut i = 0usize;
    while i < n {
        let base: f64 = rng.gen_range(EMG_EPOCH_RANGE_S.0..EMG_EPOCH_RANGE_S.1);
        let scale = if active { EMG_ACTIVE_SCALE } else { EMG_REST_SCALE };
        let len = ((base * scale * fs).round() as usize).max(1);
        let gain = if active { 1.0 } else { EMG_REST_GAIN };
        let end = (i + len).min(n);
        for v in &mut shaped[i..end] {
            *v *= gain;
        }
        i = end;
        active = !active;
    }

    let rms = (shaped.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        for v in &mut shaped {
            *v /= rms;
        }
    }
    Ok(SampledSignal::new(fs, shaped, vec![])?)
}

/// Dataset-level generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_subjects: usize,
    pub protocol: ProtocolSpec,
    pub emg_fs: f64,
    pub emg_duration_s: f64,
    pub master_seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_subjects: 12,
            protocol: ProtocolSpec::default(),
            emg_fs: 4000.0,
            emg_duration_s: 414.0,
            master_seed: 0x534B_4E41,
        }
    }
}

/// Generates a full dataset: `n_subjects` clean nerve-activity recordings
/// (subjects `s01..`) plus `n_subjects` independent muscle-noise recordings
/// (subjects `emg01..`). Profiles are drawn from the default ranges unless
/// supplied. The container manifest records seeds and profiles.
pub fn gen_dataset(
    cfg: &DatasetConfig,
    profiles: Option<&[SubjectProfile]>,
) -> Result<RecordingContainer, SynthError> {
    if cfg.n_subjects < 2 {
        return Err(SynthError::InsufficientSubjects(cfg.n_subjects));
    }
    cfg.protocol.validate()?;
    let profiles: Vec<SubjectProfile> = match profiles {
        Some(p) => {
            if p.len() != cfg.n_subjects {
                return Err(SynthError::ProfileCountMismatch {
                    got: p.len(),
                    want: cfg.n_subjects,
                });
            }
            p.to_vec()
        }
        None => (0..cfg.n_subjects)
            .map(|i| {
                let id = format!("s{:02}", i + 1);
                let seed = derive_seed(cfg.master_seed, "skna-subject", i as u64);
                SubjectProfile::random(&id, seed)
            })
            .collect(),
    };

    let emg_seeds: Vec<u64> = (0..cfg.n_subjects)
        .map(|i| derive_seed(cfg.master_seed, "emg-subject", i as u64))
        .collect();

    let manifest = json!({
        "master_seed": cfg.master_seed,
        "protocol": &cfg.protocol,
        "profiles": &profiles,
        "emg": {
            "fs": cfg.emg_fs,
            "duration_s": cfg.emg_duration_s,
            "seeds": &emg_seeds,
        },
    });

    let mut container = RecordingContainer::new(cfg.protocol.fs, manifest);
    for profile in &profiles {
        let signal = gen_skna(profile, &cfg.protocol)?;
        container.push(Record {
            subject_id: profile.subject_id.clone(),
            role: RecordRole::Skna,
            signal,
        })?;
    }
    for (i, &seed) in emg_seeds.iter().enumerate() {
        let signal = gen_emg(cfg.emg_duration_s, cfg.emg_fs, seed)?;
        container.push(Record {
            subject_id: format!("emg{:02}", i + 1),
            role: RecordRole::Emg,
            signal,
        })?;
    }
    Ok(container)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{band_power, periodogram};

    fn short_protocol() -> ProtocolSpec {
        ProtocolSpec {
            fs: 2048.0,
            steps: vec![
                (Condition::Baseline, 30.0),
                (Condition::Stimulation, 60.0),
                (Condition::Baseline, 30.0),
                (Condition::Stimulation, 60.0),
            ],
        }
    }

    /// Independent burst-rate oracle: rectify, smooth with a 50 ms moving
    /// average, threshold at baseline mean + 3 std of the smoothed trace,
    /// and count rising threshold crossings per condition.
    fn oracle_burst_rates(sig: &SampledSignal) -> (f64, f64) {
        let w = (0.05 * sig.fs).round() as usize;
        let rect: Vec<f64> = sig.samples.iter().map(|v| v.abs()).collect();
        let mut smooth = vec![0.0f64; rect.len()];
        let mut acc = 0.0;
        for i in 0..rect.len() {
            acc += rect[i];
            if i >= w {
                acc -= rect[i - w];
            }
            smooth[i] = acc / w.min(i + 1) as f64;
        }
        let baseline: Vec<f64> = sig
            .periods
            .iter()
            .filter(|p| p.condition == Condition::Baseline)
            .flat_map(|p| smooth[p.start..p.end].iter().copied())
            .collect();
        let mean = baseline.iter().sum::<f64>() / baseline.len() as f64;
        let var = baseline.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / baseline.len() as f64;
        let thr = mean + 3.0 * var.sqrt();

        let mut counts = [0usize; 2];
        let mut seconds = [0.0f64; 2];
        for p in &sig.periods {
            let idx = match p.condition {
                Condition::Baseline => 0,
                Condition::Stimulation => 1,
            };
            seconds[idx] += (p.end - p.start) as f64 / sig.fs;
            let mut above = false;
            for i in p.start..p.end {
                let now = smooth[i] > thr;
                if now && !above {
                    counts[idx] += 1;
                }
                above = now;
            }
        }
        (
            counts[0] as f64 * 60.0 / seconds[0],
            counts[1] as f64 * 60.0 / seconds[1],
        )
    }

    #[test]
    fn generation_is_deterministic() {
        let profile = SubjectProfile::random("s01", 99);
        let protocol = short_protocol();
        let a = gen_skna(&profile, &protocol).unwrap();
        let b = gen_skna(&profile, &protocol).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.periods, b.periods);
        let e1 = gen_emg(20.0, 4000.0, 7).unwrap();
        let e2 = gen_emg(20.0, 4000.0, 7).unwrap();
        assert_eq!(e1.samples, e2.samples);
    }

    #[test]
    fn skna_stays_in_its_band() {
        let profile = SubjectProfile::random("s01", 3);
        let sig = gen_skna(&profile, &short_protocol()).unwrap();
        let filtered = dsp::bandpass_filter(&sig, SKNA_BAND.0, SKNA_BAND.1).unwrap();
        let energy_in: f64 = filtered.samples.iter().map(|v| v * v).sum();
        let energy: f64 = sig.samples.iter().map(|v| v * v).sum();
        assert!(
            energy_in >= 0.8 * energy,
            "band retention {}",
            energy_in / energy
        );
    }

    #[test]
    fn stimulation_bursts_outpace_baseline_for_many_seeds() {
        let protocol = ProtocolSpec::default();
        for seed in 0..20u64 {
            let profile = SubjectProfile::random(&format!("s{seed:02}"), seed);
            let sig = gen_skna(&profile, &protocol).unwrap();
            let (base_rate, stim_rate) = oracle_burst_rates(&sig);
            assert!(
                stim_rate > base_rate,
                "seed {seed}: baseline {base_rate:.2}/min vs stimulation {stim_rate:.2}/min"
            );
        }
    }

    #[test]
    fn skna_respects_protocol_length_and_labels() {
        let profile = SubjectProfile::random("s01", 5);
        let protocol = ProtocolSpec::default();
        let sig = gen_skna(&profile, &protocol).unwrap();
        assert_eq!(sig.samples.len(), 1_720_320);
        assert_eq!(sig.periods.len(), 4);
        assert_eq!(sig.periods[1].condition, Condition::Stimulation);
    }

    #[test]
    fn emg_is_broadband_with_expected_band_share() {
        let sig = gen_emg(120.0, 4000.0, 11).unwrap();
        let (freqs, power) = periodogram(&sig.samples, sig.fs);
        let total: f64 = power.iter().sum();
        // Nonzero power across the whole band, checked in 100 Hz slabs.
        let mut f0 = 0.0;
        while f0 < 2000.0 {
            assert!(
                band_power(&freqs, &power, f0, f0 + 100.0) > 0.0,
                "empty slab at {f0} Hz"
            );
            f0 += 100.0;
        }
        let in_band = band_power(&freqs, &power, 500.0, 1000.0);
        assert!(
            in_band / total >= 0.05,
            "in-band share {}",
            in_band / total
        );
        // No single 50 Hz slab dominates.
        let mut f0 = 0.0;
        while f0 < 2000.0 {
            let p = band_power(&freqs, &power, f0, f0 + 50.0);
            assert!(p / total <= 0.30, "slab {f0} Hz holds {}", p / total);
            f0 += 50.0;
        }
    }

    #[test]
    fn emg_activation_epochs_modulate_power() {
        let sig = gen_emg(120.0, 4000.0, 23).unwrap();
        // Split into 1 s chunks; the power ratio between the loudest and
        // softest deciles should reflect the gating (1.0 vs 0.25 gain).
        let w = 4000;
        let mut powers: Vec<f64> = sig
            .samples
            .chunks_exact(w)
            .map(|c| c.iter().map(|v| v * v).sum::<f64>() / w as f64)
            .collect();
        powers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lo = powers[powers.len() / 10];
        let hi = powers[9 * powers.len() / 10];
        assert!(hi / lo >= 4.0, "power modulation ratio {}", hi / lo);
    }

    #[test]
    fn dataset_contains_both_roles_and_is_reproducible() {
        let cfg = DatasetConfig {
            n_subjects: 3,
            protocol: short_protocol(),
            emg_fs: 4000.0,
            emg_duration_s: 30.0,
            master_seed: 1234,
        };
        let a = gen_dataset(&cfg, None).unwrap();
        let b = gen_dataset(&cfg, None).unwrap();
        assert_eq!(a.records.len(), 6);
        assert_eq!(a.manifest, b.manifest);
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.subject_id, rb.subject_id);
            assert_eq!(ra.signal.samples, rb.signal.samples);
        }
        let skna: Vec<_> = a.records_with_role(RecordRole::Skna).collect();
        let emg: Vec<_> = a.records_with_role(RecordRole::Emg).collect();
        assert_eq!(skna.len(), 3);
        assert_eq!(emg.len(), 3);
        assert!(skna.iter().all(|r| r.subject_id.starts_with('s')));
        assert!(emg.iter().all(|r| r.subject_id.starts_with("emg")));
    }

    #[test]
    fn dataset_rejects_too_few_subjects() {
        let cfg = DatasetConfig {
            n_subjects: 1,
            ..DatasetConfig::default()
        };
        assert!(matches!(
            gen_dataset(&cfg, None),
            Err(SynthError::InsufficientSubjects(1))
        ));
    }

    #[test]
    fn skna_rejects_rates_that_cannot_hold_the_band() {
        let profile = SubjectProfile::random("s01", 1);
        let protocol = ProtocolSpec {
            fs: 1500.0,
            steps: vec![(Condition::Baseline, 10.0)],
        };
        assert!(matches!(
            gen_skna(&profile, &protocol),
            Err(SynthError::BandInfeasible { .. })
        ));
    }
}
