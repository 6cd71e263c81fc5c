//! Controlled contamination of clean segments with muscle noise.
//!
//! One global gain, computed over the pooled union of train and test
//! segments, scales the noise so the pooled mixture sits exactly at the
//! requested SNR. Pairings (which noise record, which offset) are drawn
//! deterministically from a plan seed and recorded in a [`MixPlan`] so any
//! mix can be replayed bit-exactly.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::{RecordRole, RecordingContainer};
use crate::signal::{Condition, SampledSignal, SegmentSet};

#[derive(Debug, Error)]
pub enum MixError {
    #[error("noise has zero power; the mixture SNR would be infinite")]
    InfiniteSnr,
    #[error("clean and noise slices differ in length ({clean} vs {noise})")]
    LengthMismatch { clean: usize, noise: usize },
    #[error("time shift {offset_s} s must lie strictly inside (0, {duration_s}) s")]
    BadShift { offset_s: f64, duration_s: f64 },
    #[error("mixing needs at least 2 noise records, got {0}")]
    TooFewNoiseRecords(usize),
    #[error("noise record '{subject}' is at {got} Hz, expected {want} Hz")]
    RateMismatch {
        subject: String,
        got: f64,
        want: f64,
    },
    #[error("noise record '{subject}' has {len} samples, too short for a span of {need}")]
    NoiseTooShort {
        subject: String,
        len: usize,
        need: usize,
    },
    #[error("subject '{0}' has no segments in the clean set")]
    UnknownTestSubject(String),
    #[error("training split is empty; need at least one other subject")]
    EmptyTrainSplit,
    #[error("cannot balance conditions: no baseline segments to duplicate")]
    NoBaselineSegments,
    #[error("clean pool has zero power; cannot calibrate a gain")]
    DegenerateClean,
    #[error(transparent)]
    Segment(#[from] crate::signal::SegmentSetError),
}

/// Pooled SNR of a clean/noise pair in dB: `10 log10(sum c^2 / sum n^2)`.
/// Zero-power noise is an error (infinite SNR); zero-power clean returns
/// the `-inf` sentinel.
pub fn measure_snr(clean: &[f64], noise: &[f64]) -> Result<f64, MixError> {
    if clean.len() != noise.len() {
        return Err(MixError::LengthMismatch {
            clean: clean.len(),
            noise: noise.len(),
        });
    }
    let pc: f64 = clean.iter().map(|v| v * v).sum();
    let pn: f64 = noise.iter().map(|v| v * v).sum();
    if pn == 0.0 {
        return Err(MixError::InfiniteSnr);
    }
    if pc == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(10.0 * (pc / pn).log10())
}

fn gain_from_powers(pc: f64, pn: f64, target_db: f64) -> Result<f64, MixError> {
    if pn == 0.0 {
        return Err(MixError::InfiniteSnr);
    }
    if pc == 0.0 {
        return Err(MixError::DegenerateClean);
    }
    Ok((pc / pn).sqrt() * 10f64.powf(-target_db / 20.0))
}

/// Single gain that brings the pooled clean/noise pair to `target_db`.
pub fn global_gain_for_target(
    clean: &SegmentSet,
    noise: &SegmentSet,
    target_db: f64,
) -> Result<f64, MixError> {
    let pc: f64 = clean.values().iter().map(|v| v * v).sum();
    let pn: f64 = noise.values().iter().map(|v| v * v).sum();
    gain_from_powers(pc, pn, target_db)
}

/// Circularly shifts a signal later in time by `offset_s` seconds. The
/// offset must lie strictly between zero and the signal duration.
pub fn time_shift(sig: &SampledSignal, offset_s: f64) -> Result<SampledSignal, MixError> {
    let duration_s = sig.duration_s();
    if !(offset_s > 0.0 && offset_s < duration_s) {
        return Err(MixError::BadShift {
            offset_s,
            duration_s,
        });
    }
    let n = sig.samples.len();
    let shift = ((offset_s * sig.fs).round() as usize) % n;
    let mut samples = Vec::with_capacity(n);
    samples.extend_from_slice(&sig.samples[n - shift..]);
    samples.extend_from_slice(&sig.samples[..n - shift]);
    Ok(SampledSignal {
        fs: sig.fs,
        samples,
        periods: sig.periods.clone(),
    })
}

/// One recorded pairing: which clean row was mixed with which noise slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    /// Row index into the clean segment set passed to [`mix_dataset`].
    pub clean_index: usize,
    pub noise_subject: String,
    /// Start sample of the slice; for `shifted` rows the offset indexes the
    /// circularly shifted record and may wrap around its end.
    pub noise_offset: usize,
    pub shifted: bool,
}

/// Complete, replayable description of one contamination run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixPlan {
    pub target_snr_db: f64,
    pub test_subject: String,
    pub test_noise_subject: String,
    pub train_noise_subjects: Vec<String>,
    /// Circular shift (in samples) applied to each record when slicing for
    /// augmentation rows.
    pub record_shifts: BTreeMap<String, usize>,
    pub train_pairs: Vec<PairRecord>,
    pub test_pairs: Vec<PairRecord>,
    pub global_gain: f64,
    pub window_len: usize,
    pub fs: f64,
}

/// Output of [`mix_dataset`]: contaminated train and test sets plus the
/// plan that reproduces them.
#[derive(Debug, Clone)]
pub struct MixOutput {
    pub train_noisy: SegmentSet,
    pub test_noisy: SegmentSet,
    pub plan: MixPlan,
}

/// Draws offsets for one noise record: aligned slots in shuffled order
/// first (no reuse until the record is exhausted), uniform offsets after.
struct OffsetPool {
    slots: Vec<usize>,
    next: usize,
    len: usize,
    window: usize,
}

impl OffsetPool {
    fn new(len: usize, window: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut slots: Vec<usize> = (0..len / window).map(|k| k * window).collect();
        slots.shuffle(rng);
        OffsetPool {
            slots,
            next: 0,
            len,
            window,
        }
    }

    fn draw(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.next < self.slots.len() {
            let v = self.slots[self.next];
            self.next += 1;
            v
        } else {
            rng.gen_range(0..=self.len - self.window)
        }
    }
}

/// Reads `window` samples starting at `offset` from a record that has been
/// circularly shifted by `shift`, wrapping around the end if needed.
fn slice_shifted(samples: &[f64], shift: usize, offset: usize, window: usize) -> Vec<f64> {
    let n = samples.len();
    let mut out = Vec::with_capacity(window);
    for i in 0..window {
        // Shifting content later by `shift` means output[j] = input[j - shift].
        let j = (offset + i + n - shift % n) % n;
        out.push(samples[j]);
    }
    out
}

/// Contaminates a multi-subject clean segment set with muscle noise at a
/// single global SNR.
///
/// * Segments of `test_subject` form the test set; all other subjects form
///   the training set.
/// * One noise record is reserved for the test set; it never appears in a
///   training pair.
/// * Training rows draw independent slices; baseline training rows are
///   duplicated with slices from time-shifted records until the baseline
///   and stimulation counts match (when baseline is the minority).
/// * Test rows draw one contiguous slice per chain of consecutive windows,
///   so overlapping test windows agree on their shared samples and the
///   reassembled test signal is a continuous contaminated trace.
pub fn mix_dataset(
    clean: &SegmentSet,
    noise: &RecordingContainer,
    plan_seed: u64,
    target_snr_db: f64,
    test_subject: &str,
) -> Result<MixOutput, MixError> {
    let window = clean.window_len;
    let noise_records: Vec<(&str, &[f64])> = noise
        .records_with_role(RecordRole::Emg)
        .map(|r| (r.subject_id.as_str(), r.signal.samples.as_slice()))
        .collect();
    if noise_records.len() < 2 {
        return Err(MixError::TooFewNoiseRecords(noise_records.len()));
    }
    for r in noise.records_with_role(RecordRole::Emg) {
        if r.signal.fs != clean.fs {
            return Err(MixError::RateMismatch {
                subject: r.subject_id.clone(),
                got: r.signal.fs,
                want: clean.fs,
            });
        }
        if r.signal.samples.len() < window {
            return Err(MixError::NoiseTooShort {
                subject: r.subject_id.clone(),
                len: r.signal.samples.len(),
                need: window,
            });
        }
    }
    if clean.subject_index(test_subject).is_none() {
        return Err(MixError::UnknownTestSubject(test_subject.to_string()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(plan_seed);
    let test_noise_idx = rng.gen_range(0..noise_records.len());
    let test_noise_subject = noise_records[test_noise_idx].0.to_string();
    let train_noise: Vec<usize> = (0..noise_records.len())
        .filter(|&i| i != test_noise_idx)
        .collect();

    let mut train_rows: Vec<usize> = Vec::new();
    let mut test_rows: Vec<usize> = Vec::new();
    for i in 0..clean.len() {
        if clean.subject_name(i) == test_subject {
            test_rows.push(i);
        } else {
            train_rows.push(i);
        }
    }
    if train_rows.is_empty() {
        return Err(MixError::EmptyTrainSplit);
    }

    let mut pools: BTreeMap<usize, OffsetPool> = BTreeMap::new();
    for &i in &train_noise {
        pools.insert(
            i,
            OffsetPool::new(noise_records[i].1.len(), window, &mut rng),
        );
    }

    // Training pairs: independent random record + offset per clean row.
    let mut train_pairs: Vec<PairRecord> = Vec::new();
    for &row in &train_rows {
        let rec = train_noise[rng.gen_range(0..train_noise.len())];
        let offset = pools.get_mut(&rec).expect("pool exists").draw(&mut rng);
        train_pairs.push(PairRecord {
            clean_index: row,
            noise_subject: noise_records[rec].0.to_string(),
            noise_offset: offset,
            shifted: false,
        });
    }

    // Augmentation: duplicate baseline rows with slices from time-shifted
    // records until the per-condition counts are equal.
    let mut record_shifts: BTreeMap<String, usize> = BTreeMap::new();
    let baseline_rows: Vec<usize> = train_rows
        .iter()
        .copied()
        .filter(|&r| clean.meta(r).condition == Condition::Baseline)
        .collect();
    let n_baseline = baseline_rows.len();
    let n_stim = train_rows.len() - n_baseline;
    if n_baseline < n_stim {
        if n_baseline == 0 {
            return Err(MixError::NoBaselineSegments);
        }
        let mut order = baseline_rows.clone();
        order.shuffle(&mut rng);
        for k in 0..(n_stim - n_baseline) {
            let row = order[k % order.len()];
            let rec = train_noise[rng.gen_range(0..train_noise.len())];
            let subject = noise_records[rec].0.to_string();
            if !record_shifts.contains_key(&subject) {
                let len = noise_records[rec].1.len();
                let fs = clean.fs;
                let lo = (0.25 * fs).round() as usize;
                let hi = len - lo;
                let shift = rng.gen_range(lo..hi);
                record_shifts.insert(subject.clone(), shift);
            }
            let offset = pools.get_mut(&rec).expect("pool exists").draw(&mut rng);
            train_pairs.push(PairRecord {
                clean_index: row,
                noise_subject: subject,
                noise_offset: offset,
                shifted: true,
            });
        }
    }

    // Test pairs: one contiguous random-origin slice per chain of
    // consecutive windows from the reserved record.
    let stride = ((window as f64) * (1.0 - clean.overlap)).round() as usize;
    let test_noise_len = noise_records[test_noise_idx].1.len();
    let mut test_pairs: Vec<PairRecord> = Vec::new();
    let mut chain_start = 0usize;
    while chain_start < test_rows.len() {
        let mut chain_end = chain_start + 1;
        while chain_end < test_rows.len() {
            let prev = clean.meta(test_rows[chain_end - 1]).start;
            let here = clean.meta(test_rows[chain_end]).start;
            if here == prev + stride {
                chain_end += 1;
            } else {
                break;
            }
        }
        let first = clean.meta(test_rows[chain_start]).start;
        let last = clean.meta(test_rows[chain_end - 1]).start;
        let span = last - first + window;
        if span > test_noise_len {
            return Err(MixError::NoiseTooShort {
                subject: test_noise_subject.clone(),
                len: test_noise_len,
                need: span,
            });
        }
        let base = rng.gen_range(0..=test_noise_len - span);
        for &row in &test_rows[chain_start..chain_end] {
            let rel = clean.meta(row).start - first;
            test_pairs.push(PairRecord {
                clean_index: row,
                noise_subject: test_noise_subject.clone(),
                noise_offset: base + rel,
                shifted: false,
            });
        }
        chain_start = chain_end;
    }

    // One global gain over the pooled union of everything being mixed.
    let slice_for = |pair: &PairRecord| -> Vec<f64> {
        let (_, samples) = noise_records
            .iter()
            .find(|(id, _)| *id == pair.noise_subject)
            .expect("pair references a known record");
        if pair.shifted {
            let shift = record_shifts[&pair.noise_subject];
            slice_shifted(samples, shift, pair.noise_offset, window)
        } else {
            samples[pair.noise_offset..pair.noise_offset + window].to_vec()
        }
    };
    let mut pc = 0.0f64;
    let mut pn = 0.0f64;
    for pair in train_pairs.iter().chain(&test_pairs) {
        pc += clean
            .segment(pair.clean_index)
            .iter()
            .map(|v| v * v)
            .sum::<f64>();
        pn += slice_for(pair).iter().map(|v| v * v).sum::<f64>();
    }
    let gain = gain_from_powers(pc, pn, target_snr_db)?;

    let mut train_noisy = SegmentSet::new(clean.fs, window, clean.overlap);
    for pair in &train_pairs {
        let noise_slice = slice_for(pair);
        let c = clean.segment(pair.clean_index);
        let mixed: Vec<f64> = c
            .iter()
            .zip(&noise_slice)
            .map(|(cv, nv)| cv + gain * nv)
            .collect();
        let m = clean.meta(pair.clean_index);
        train_noisy.push(
            clean.subject_name(pair.clean_index),
            m.condition,
            m.start,
            &mixed,
        )?;
    }
    let mut test_noisy = SegmentSet::new(clean.fs, window, clean.overlap);
    for pair in &test_pairs {
        let noise_slice = slice_for(pair);
        let c = clean.segment(pair.clean_index);
        let mixed: Vec<f64> = c
            .iter()
            .zip(&noise_slice)
            .map(|(cv, nv)| cv + gain * nv)
            .collect();
        let m = clean.meta(pair.clean_index);
        test_noisy.push(
            clean.subject_name(pair.clean_index),
            m.condition,
            m.start,
            &mixed,
        )?;
    }

    let plan = MixPlan {
        target_snr_db,
        test_subject: test_subject.to_string(),
        test_noise_subject,
        train_noise_subjects: train_noise
            .iter()
            .map(|&i| noise_records[i].0.to_string())
            .collect(),
        record_shifts,
        train_pairs,
        test_pairs,
        global_gain: gain,
        window_len: window,
        fs: clean.fs,
    };
    Ok(MixOutput {
        train_noisy,
        test_noisy,
        plan,
    })
}

/// Rebuilds the noise slice recorded for one pair (for replay checks and
/// reconstruction of the clean target alignment).
pub fn replay_noise_slice(
    plan: &MixPlan,
    noise: &RecordingContainer,
    pair: &PairRecord,
) -> Result<Vec<f64>, MixError> {
    let record = noise
        .find(&pair.noise_subject)
        .ok_or_else(|| MixError::UnknownTestSubject(pair.noise_subject.clone()))?;
    let samples = &record.signal.samples;
    if pair.shifted {
        let shift = *plan
            .record_shifts
            .get(&pair.noise_subject)
            .unwrap_or(&0usize);
        Ok(slice_shifted(samples, shift, pair.noise_offset, plan.window_len))
    } else {
        Ok(samples[pair.noise_offset..pair.noise_offset + plan.window_len].to_vec())
    }
}

/// Pooled achieved SNR of an emitted mixed set against its clean sources.
pub fn achieved_snr(
    clean: &SegmentSet,
    mixed: &SegmentSet,
    pairs: &[PairRecord],
) -> Result<f64, MixError> {
    let mut pc = 0.0;
    let mut pe = 0.0;
    for (i, pair) in pairs.iter().enumerate() {
        let c = clean.segment(pair.clean_index);
        let m = mixed.segment(i);
        pc += c.iter().map(|v| v * v).sum::<f64>();
        pe += c
            .iter()
            .zip(m)
            .map(|(cv, mv)| (mv - cv) * (mv - cv))
            .sum::<f64>();
    }
    if pe == 0.0 {
        return Err(MixError::InfiniteSnr);
    }
    Ok(10.0 * (pc / pe).log10())
}
