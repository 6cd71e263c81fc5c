//! Reverse-mode neural-network primitives for 1-D biosignal models.
//!
//! Everything is computed in `f64` on (batch, channels, time) tensors with
//! hand-written forward/backward passes — no external ML dependencies.
//! The layer set is exactly what a convolutional-recurrent denoising
//! autoencoder needs: strided convolution and transposed convolution,
//! batch normalization, inverted dropout, ReLU, uni- and bidirectional
//! LSTM, residual addition, an MSE loss, a bias-corrected Adam optimizer,
//! and a class-balanced batch sampler. A finite-difference gradient-check
//! harness ([`gradcheck`]) verifies every backward pass against central
//! differences.

pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod linalg;
pub mod lstm;
pub mod norm;
pub mod sampler;
pub mod simple;
pub mod tensor;

pub use adam::Adam;
pub use conv::{Conv1d, Deconv1d};
pub use lstm::{BiLstm, Lstm};
pub use norm::BatchNorm1d;
pub use sampler::BalancedBatchSampler;
pub use simple::{mse_loss, residual_add, Dropout, Relu};
pub use tensor::{Mode, NnError, Tensor3};
