//! Sea-ice classification from two-channel SAR patches.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense `f32` tensors, a reverse-mode gradient tape and Adam.
//! - [`vit`]: a configurable Vision Transformer classifier and its checkpoint format.
//! - [`losses`]: cross-entropy, weighted cross-entropy and focal loss.
//! - [`data`]: scene/label rasters, stage-of-development taxonomy, patch tiling,
//!   leakage-aware block splitting, normalization statistics and a synthetic
//!   scene generator.
//! - [`metrics`]: confusion matrices, precision/recall/F1 and report rendering.
//! - [`train`]: the minibatch training and evaluation loops shared by the CLI.

pub mod data;
pub mod losses;
pub mod metrics;
pub mod tensor;
pub mod train;
pub mod vit;

pub use tensor::{AdamConfig, AdamState, Gradients, Tape, Tensor, TensorError, Var};
