//! Depth-video restoration building blocks.
//!
//! Frames are millimeter `u16` grids with `0` marking missing measurements.
//! This crate covers I/O, depth-to-color registration, color-guided fast
//! marching inpainting, a structured-light noise simulator, evaluation metrics
//! and the classical baselines. The learned denoiser lives in `depthmend-nn`.

pub mod classic;
pub mod error;
pub mod frame;
pub mod inpaint;
pub mod io;
pub mod metrics;
pub mod noise;
pub mod registration;
pub mod sequence;

pub use error::{Error, Result};
pub use frame::{denormalize, normalize, ColorFrame, DepthFrame, NormalizedFrame, DEFAULT_MAX_DEPTH_MM, HOLE};
pub use registration::{build_registered_color, CameraRig, HoleFillConfig, Intrinsics, RegisteredColor};
pub use sequence::{FrameSequence, TrainingSample};
