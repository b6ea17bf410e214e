//! Self-supervised depth video denoiser.
//!
//! A five-level convolutional encoder/decoder with skip connections predicts
//! a correction that is subtracted from the newest input frame. Training pairs
//! hide the frame being reconstructed from the input and use its color-guided
//! inpainting as the target. Everything (convolutions, backpropagation, Adam)
//! runs on the CPU; only the inner matrix product is delegated to
//! `matrixmultiply`.

pub mod adam;
pub mod conv;
pub mod error;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{build_model, DenoiserModel, NetworkConfig, ALIGN, DEFAULT_FILTERS};
pub use train::{
    build_examples, evaluate_l1, infer, infer_variant, make_target, restore_sequence, train, write_training_log, EpochLog,
    Example, Mode, TargetConfig, TrainConfig, TrainOutcome,
};
