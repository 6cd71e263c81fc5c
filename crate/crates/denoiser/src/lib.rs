//! Convolutional-recurrent denoising autoencoder for nerve-activity traces:
//! model wiring, the training loop, segment-wise inference, overlap-add
//! reconstruction, and checkpoint persistence.

pub mod model;
pub mod persist;
pub mod reconstruct;
pub mod train;

pub use model::{build_model, build_model_for, DenoiserModel, DEFAULT_WINDOW_LEN};
pub use persist::{load_model, save_model};
pub use reconstruct::{denoise_segments, overlap_add, ReconstructError};
pub use train::{toy_training_fixture, train, TrainConfig, TrainError, TrainReport};
