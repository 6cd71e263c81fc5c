//! Segment-wise inference and reconstruction of a continuous trace from
//! overlapping model outputs.

use thiserror::Error;

use skna_core::dsp::NormStats;
use skna_core::signal::{Period, SampledSignal, SegmentSet, SignalError};
use skna_nn::{Mode, NnError, Tensor3};

use crate::model::DenoiserModel;

/// Rows per inference batch; a throughput knob with no effect on results.
const EVAL_BATCH: usize = 32;

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error("segment set is empty")]
    Empty,
    #[error("segments span multiple subjects ({0} and {1}); reconstruct one trace at a time")]
    MixedSubjects(String, String),
    #[error("segment {index} starts before its predecessor; outputs must be chronological")]
    NotChronological { index: usize },
    #[error("overlap fraction {0} is not supported (use 0.0 or 0.5)")]
    UnsupportedOverlap(f64),
    #[error("segment start {start} is not aligned to the {stride}-sample stride")]
    MisalignedStart { start: usize, stride: usize },
    #[error("two segments share start {0}")]
    DuplicateStart(usize),
    #[error("segment chain has coverage gaps; missing window indices: {missing:?}")]
    DiscontinuousChain { missing: Vec<usize> },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Runs the trained model in eval mode over every segment, preserving
/// order and metadata. Outputs stay in the model's normalized domain.
pub fn denoise_segments(
    model: &mut DenoiserModel,
    noisy: &SegmentSet,
) -> Result<SegmentSet, ReconstructError> {
    let w = noisy.window_len;
    let mut out = SegmentSet::new(noisy.fs, w, noisy.overlap);
    let mut row = 0;
    while row < noisy.len() {
        let batch = (noisy.len() - row).min(EVAL_BATCH);
        let mut x = Tensor3::zeros(batch, 1, w);
        for b in 0..batch {
            x.data[b * w..(b + 1) * w].copy_from_slice(noisy.segment(row + b));
        }
        let y = model.forward(&x, Mode::Eval)?;
        for b in 0..batch {
            let m = noisy.meta(row + b);
            out.push(
                noisy.subject_name(row + b),
                m.condition,
                m.start,
                &y.data[b * w..(b + 1) * w],
            )
            .expect("output row has window length");
        }
        row += batch;
    }
    Ok(out)
}

/// Blends chronologically ordered, possibly overlapping segments back into
/// one continuous trace.
///
/// Each window is weighted by a symmetric triangle; accumulated values are
/// divided by the accumulated weight, so wherever windows agree the input
/// is reproduced exactly (the interior of a 50%-overlap chain is a strict
/// partition of unity, and edges are renormalized to full weight). When
/// `norm` is given the blended trace is mapped back to physical units.
///
/// Segment starts must fall on the stride grid. A skipped grid slot whose
/// neighbours still cover every sample (as happens where two tiling runs
/// abut) is blended without cross-fade at the junction; a skipped slot
/// that leaves samples uncovered is a discontinuity error naming the
/// missing window indices.
pub fn overlap_add(
    outputs: &SegmentSet,
    norm: Option<&NormStats>,
) -> Result<SampledSignal, ReconstructError> {
    if outputs.is_empty() {
        return Err(ReconstructError::Empty);
    }
    let w = outputs.window_len;
    let stride = if outputs.overlap == 0.0 {
        w
    } else if outputs.overlap == 0.5 && w % 2 == 0 {
        w / 2
    } else {
        return Err(ReconstructError::UnsupportedOverlap(outputs.overlap));
    };

    let first_subject = outputs.subject_name(0).to_string();
    let s0 = outputs.meta(0).start;
    let mut slots = Vec::with_capacity(outputs.len());
    for i in 0..outputs.len() {
        if outputs.subject_name(i) != first_subject {
            return Err(ReconstructError::MixedSubjects(
                first_subject,
                outputs.subject_name(i).to_string(),
            ));
        }
        let start = outputs.meta(i).start;
        if i > 0 {
            let prev = outputs.meta(i - 1).start;
            if start < prev {
                return Err(ReconstructError::NotChronological { index: i });
            }
            if start == prev {
                return Err(ReconstructError::DuplicateStart(start));
            }
        }
        if (start - s0) % stride != 0 {
            return Err(ReconstructError::MisalignedStart { start, stride });
        }
        slots.push((start - s0) / stride);
    }

    // A slot skip is fatal only if it opens a sample-level hole: the
    // previous window reaches prev*stride + w, the next begins at
    // next*stride.
    let mut missing = Vec::new();
    for pair in slots.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b > a + 1 && b * stride > a * stride + w {
            missing.extend(a + 1..b);
        }
    }
    if !missing.is_empty() {
        return Err(ReconstructError::DiscontinuousChain { missing });
    }

    let total = slots.last().unwrap() * stride + w;
    let mut acc = vec![0.0f64; total];
    let mut wsum = vec![0.0f64; total];
    let weight: Vec<f64> = (0..w)
        .map(|j| (j as f64 + 0.5).min(w as f64 - j as f64 - 0.5))
        .collect();
    for (i, &slot) in slots.iter().enumerate() {
        let off = slot * stride;
        let row = outputs.segment(i);
        for j in 0..w {
            acc[off + j] += weight[j] * row[j];
            wsum[off + j] += weight[j];
        }
    }
    let mut samples: Vec<f64> = acc.iter().zip(&wsum).map(|(a, s)| a / s).collect();
    if let Some(n) = norm {
        for v in &mut samples {
            *v = *v * n.std + n.mean;
        }
    }

    // Period table: consecutive same-condition windows form one period.
    let mut periods: Vec<Period> = Vec::new();
    for (i, &slot) in slots.iter().enumerate() {
        let cond = outputs.meta(i).condition;
        let start = slot * stride;
        let end = start + w;
        match periods.last_mut() {
            Some(p) if p.condition == cond && p.end >= start => {
                p.end = p.end.max(end);
            }
            _ => periods.push(Period {
                start,
                end,
                condition: cond,
            }),
        }
    }

    Ok(SampledSignal::new(outputs.fs, samples, periods)?)
}
