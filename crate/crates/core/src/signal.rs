//! Core signal model: uniformly sampled traces with labelled protocol
//! periods, and windowed segment collections derived from them.
//!
//! Amplitudes are microvolts throughout. Period boundaries are expressed in
//! samples with half-open `[start, end)` semantics so that adjacent periods
//! can share a boundary without overlapping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Experimental condition attached to a protocol period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Baseline,
    Stimulation,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Baseline => "baseline",
            Condition::Stimulation => "stimulation",
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A labelled half-open span of samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub start: usize,
    pub end: usize,
    pub condition: Condition,
}

impl Period {
    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("sample rate must be positive and finite, got {0}")]
    BadSampleRate(f64),
    #[error("sample {index} is not finite")]
    NonFiniteSample { index: usize },
    #[error("period {index} is empty (start {start}, end {end})")]
    EmptyPeriod { index: usize, start: usize, end: usize },
    #[error("period {index} ends at {end} but the signal has {len} samples")]
    PeriodOutOfBounds { index: usize, end: usize, len: usize },
    #[error("periods {first} and {second} overlap or are out of order")]
    PeriodsOutOfOrder { first: usize, second: usize },
}

/// A uniformly sampled signal with optional labelled periods.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    pub fs: f64,
    pub samples: Vec<f64>,
    pub periods: Vec<Period>,
}

impl SampledSignal {
    /// Builds a signal and validates the period table: periods must be
    /// non-empty, sorted, mutually disjoint and inside the sample range.
    pub fn new(fs: f64, samples: Vec<f64>, periods: Vec<Period>) -> Result<Self, SignalError> {
        if !fs.is_finite() || fs <= 0.0 {
            return Err(SignalError::BadSampleRate(fs));
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(SignalError::NonFiniteSample { index });
        }
        for (i, p) in periods.iter().enumerate() {
            if p.is_empty() {
                return Err(SignalError::EmptyPeriod {
                    index: i,
                    start: p.start,
                    end: p.end,
                });
            }
            if p.end > samples.len() {
                return Err(SignalError::PeriodOutOfBounds {
                    index: i,
                    end: p.end,
                    len: samples.len(),
                });
            }
            if i > 0 && periods[i - 1].end > p.start {
                return Err(SignalError::PeriodsOutOfOrder {
                    first: i - 1,
                    second: i,
                });
            }
        }
        Ok(SampledSignal {
            fs,
            samples,
            periods,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    pub fn period_slice(&self, period: &Period) -> &[f64] {
        &self.samples[period.start..period.end]
    }

    /// Replaces the samples, keeping rate and period table. The new samples
    /// must be at least as long as the last period end.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self, SignalError> {
        Self::new(self.fs, samples, self.periods.clone())
    }
}

/// Per-segment provenance: owning subject, condition of the enclosing
/// period, and the absolute start sample in the source signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentMeta {
    pub subject: u32,
    pub condition: Condition,
    pub start: usize,
}

#[derive(Debug, Error)]
pub enum SegmentSetError {
    #[error("segment has {got} samples, expected window of {want}")]
    WindowMismatch { got: usize, want: usize },
    #[error("segment sets disagree on {field} ({a} vs {b})")]
    Incompatible {
        field: &'static str,
        a: String,
        b: String,
    },
    #[error("segment index {0} out of range")]
    IndexOutOfRange(usize),
}

/// A collection of fixed-length windows cut from one or more signals.
///
/// Rows are stored densely (`len * window_len` values); per-row metadata is
/// kept in `meta` and subject names are interned in `subjects`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSet {
    pub fs: f64,
    pub window_len: usize,
    pub overlap: f64,
    subjects: Vec<String>,
    data: Vec<f64>,
    meta: Vec<SegmentMeta>,
}

impl SegmentSet {
    pub fn new(fs: f64, window_len: usize, overlap: f64) -> Self {
        SegmentSet {
            fs,
            window_len,
            overlap,
            subjects: Vec::new(),
            data: Vec::new(),
            meta: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn subject_index(&self, subject: &str) -> Option<u32> {
        self.subjects
            .iter()
            .position(|s| s == subject)
            .map(|i| i as u32)
    }

    fn intern_subject(&mut self, subject: &str) -> u32 {
        match self.subject_index(subject) {
            Some(i) => i,
            None => {
                self.subjects.push(subject.to_string());
                (self.subjects.len() - 1) as u32
            }
        }
    }

    pub fn push(
        &mut self,
        subject: &str,
        condition: Condition,
        start: usize,
        samples: &[f64],
    ) -> Result<(), SegmentSetError> {
        if samples.len() != self.window_len {
            return Err(SegmentSetError::WindowMismatch {
                got: samples.len(),
                want: self.window_len,
            });
        }
        let subject = self.intern_subject(subject);
        self.data.extend_from_slice(samples);
        self.meta.push(SegmentMeta {
            subject,
            condition,
            start,
        });
        Ok(())
    }

    pub fn segment(&self, index: usize) -> &[f64] {
        let w = self.window_len;
        &self.data[index * w..(index + 1) * w]
    }

    pub fn segment_mut(&mut self, index: usize) -> &mut [f64] {
        let w = self.window_len;
        &mut self.data[index * w..(index + 1) * w]
    }

    pub fn meta(&self, index: usize) -> SegmentMeta {
        self.meta[index]
    }

    pub fn subject_name(&self, index: usize) -> &str {
        &self.subjects[self.meta[index].subject as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = (SegmentMeta, &[f64])> + '_ {
        self.meta
            .iter()
            .copied()
            .zip(self.data.chunks_exact(self.window_len))
    }

    /// Number of segments per condition, as (baseline, stimulation).
    pub fn condition_counts(&self) -> (usize, usize) {
        let mut counts = (0usize, 0usize);
        for m in &self.meta {
            match m.condition {
                Condition::Baseline => counts.0 += 1,
                Condition::Stimulation => counts.1 += 1,
            }
        }
        counts
    }

    /// Copies the rows selected by `indices` into a new set.
    pub fn select(&self, indices: &[usize]) -> Result<SegmentSet, SegmentSetError> {
        let mut out = SegmentSet::new(self.fs, self.window_len, self.overlap);
        for &i in indices {
            if i >= self.len() {
                return Err(SegmentSetError::IndexOutOfRange(i));
            }
            let name = self.subject_name(i).to_string();
            let m = self.meta[i];
            out.push(&name, m.condition, m.start, self.segment(i))?;
        }
        Ok(out)
    }

    /// Splits into (rows whose subject matches, rows whose subject differs).
    pub fn split_by_subject(&self, subject: &str) -> (SegmentSet, SegmentSet) {
        let mut matched = Vec::new();
        let mut rest = Vec::new();
        for i in 0..self.len() {
            if self.subject_name(i) == subject {
                matched.push(i);
            } else {
                rest.push(i);
            }
        }
        (
            self.select(&matched).expect("indices in range"),
            self.select(&rest).expect("indices in range"),
        )
    }

    /// Merges several compatible sets (same rate, window and overlap).
    pub fn merge<'a>(
        sets: impl IntoIterator<Item = &'a SegmentSet>,
    ) -> Result<SegmentSet, SegmentSetError> {
        let mut iter = sets.into_iter();
        let first = match iter.next() {
            Some(s) => s,
            None => return Ok(SegmentSet::new(0.0, 0, 0.0)),
        };
        let mut out = first.clone();
        for s in iter {
            if s.fs != out.fs {
                return Err(SegmentSetError::Incompatible {
                    field: "fs",
                    a: out.fs.to_string(),
                    b: s.fs.to_string(),
                });
            }
            if s.window_len != out.window_len {
                return Err(SegmentSetError::Incompatible {
                    field: "window_len",
                    a: out.window_len.to_string(),
                    b: s.window_len.to_string(),
                });
            }
            if s.overlap != out.overlap {
                return Err(SegmentSetError::Incompatible {
                    field: "overlap",
                    a: out.overlap.to_string(),
                    b: s.overlap.to_string(),
                });
            }
            for i in 0..s.len() {
                let name = s.subject_name(i).to_string();
                let m = s.meta(i);
                out.push(&name, m.condition, m.start, s.segment(i))?;
            }
        }
        Ok(out)
    }
}
