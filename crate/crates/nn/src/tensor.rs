//! Dense (batch, channels, time) tensor and the crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{what}: got {got}, want {want}")]
    ShapeMismatch {
        what: &'static str,
        got: String,
        want: String,
    },
    #[error("backward called without a cached forward pass")]
    NoForwardCache,
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(f64),
    #[error("batch size {batch} not divisible by {classes} classes")]
    BatchNotDivisible { batch: usize, classes: usize },
    #[error("class {class} has {have} samples but the per-batch quota is {need}")]
    ClassTooSmall {
        class: usize,
        have: usize,
        need: usize,
    },
    #[error("dropout rate must lie in [0, 1), got {0}")]
    BadDropoutRate(f64),
    #[error("checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Train/eval switch: training enables dropout, batch statistics, and
/// backward caches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Dense rank-3 tensor laid out as `data[(b*channels + c)*time + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub batch: usize,
    pub channels: usize,
    pub time: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(batch: usize, channels: usize, time: usize) -> Self {
        Tensor3 {
            batch,
            channels,
            time,
            data: vec![0.0; batch * channels * time],
        }
    }

    pub fn from_vec(
        batch: usize,
        channels: usize,
        time: usize,
        data: Vec<f64>,
    ) -> Result<Self, NnError> {
        if data.len() != batch * channels * time {
            return Err(NnError::ShapeMismatch {
                what: "tensor payload length",
                got: data.len().to_string(),
                want: (batch * channels * time).to_string(),
            });
        }
        Ok(Tensor3 {
            batch,
            channels,
            time,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.channels, self.time)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn channel(&self, b: usize, c: usize) -> &[f64] {
        let start = (b * self.channels + c) * self.time;
        &self.data[start..start + self.time]
    }

    #[inline]
    pub fn channel_mut(&mut self, b: usize, c: usize) -> &mut [f64] {
        let start = (b * self.channels + c) * self.time;
        &mut self.data[start..start + self.time]
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, t: usize) -> f64 {
        self.data[(b * self.channels + c) * self.time + t]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, t: usize, v: f64) {
        self.data[(b * self.channels + c) * self.time + t] = v;
    }

    pub fn same_shape(&self, other: &Tensor3) -> bool {
        self.shape() == other.shape()
    }

    /// Elementwise sum into `self`.
    pub fn add_assign(&mut self, other: &Tensor3) -> Result<(), NnError> {
        if !self.same_shape(other) {
            return Err(NnError::ShapeMismatch {
                what: "elementwise add",
                got: format!("{:?}", other.shape()),
                want: format!("{:?}", self.shape()),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// New tensor with the time axis reversed (used by the backward
    /// direction of the bidirectional LSTM).
    pub fn reverse_time(&self) -> Tensor3 {
        let mut out = self.clone();
        for b in 0..self.batch {
            for c in 0..self.channels {
                out.channel_mut(b, c).reverse();
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
