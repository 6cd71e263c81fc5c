//! Signal-level foundation of the SKNA denoising toolkit.
//!
//! The crate covers the non-neural half of the pipeline:
//!
//! ```text
//!   synth ──> container ──> dsp (filter/resample/segment/normalize)
//!                              │
//!                              ├──> mix (EMG contamination at target SNR)
//!                              ├──> features (integrated activity, bursts)
//!                              └──> stats (reconstruction + hypothesis tests)
//! ```
//!
//! Everything is deterministic given explicit seeds; see [`seeds`].

pub mod container;
pub mod dsp;
pub mod features;
pub mod mix;
pub mod seeds;
pub mod signal;
pub mod spectrum;
pub mod stats;
pub mod synth;

pub use signal::{Condition, Period, SampledSignal, SegmentMeta, SegmentSet};
