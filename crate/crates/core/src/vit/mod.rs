//! Vision Transformer classifier.
//!
//! Images are cut into non-overlapping `P×P` patches, linearly projected,
//! prefixed with a learned class token and summed with learned positional
//! embeddings. A stack of pre-LN transformer blocks follows; the final
//! layer-normed class token feeds a linear head.

mod checkpoint;
mod model;
mod params;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta,
    CHECKPOINT_MAGIC,
};
pub use model::{forward, patchify, predict, unpatchify};
pub use params::{init_params, layout, BlockParams, ViTParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum VitError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = VitError> = std::result::Result<T, E>;

/// Layer-norm epsilon used throughout the network.
pub const LN_EPS: f32 = 1e-6;

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViTConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub in_channels: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub num_classes: usize,
}

impl ViTConfig {
    /// 768-wide, 12 blocks, 12 heads, 16-pixel patches on 224-pixel inputs.
    pub fn vit_base(in_channels: usize, num_classes: usize) -> Self {
        Self {
            image_size: 224,
            patch_size: 16,
            in_channels,
            embed_dim: 768,
            depth: 12,
            heads: 12,
            mlp_ratio: 4,
            num_classes,
        }
    }

    /// 1024-wide, 24 blocks, 16 heads, 16-pixel patches on 224-pixel inputs.
    pub fn vit_large(in_channels: usize, num_classes: usize) -> Self {
        Self {
            embed_dim: 1024,
            depth: 24,
            heads: 16,
            ..Self::vit_base(in_channels, num_classes)
        }
    }

    /// Desk-scale model: 8-pixel two-channel inputs, 4-pixel patches, one
    /// block of width 8 with two heads, three classes.
    pub fn vit_test() -> Self {
        Self {
            image_size: 8,
            patch_size: 4,
            in_channels: 2,
            embed_dim: 8,
            depth: 1,
            heads: 2,
            mlp_ratio: 4,
            num_classes: 3,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "vit_base" => Some(Self::vit_base(2, 6)),
            "vit_large" => Some(Self::vit_large(2, 6)),
            "vit_test" => Some(Self::vit_test()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("image_size", self.image_size),
            ("patch_size", self.patch_size),
            ("in_channels", self.in_channels),
            ("embed_dim", self.embed_dim),
            ("depth", self.depth),
            ("heads", self.heads),
            ("mlp_ratio", self.mlp_ratio),
            ("num_classes", self.num_classes),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(VitError::Config(format!("{name} must be >= 1")));
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return Err(VitError::Config(format!(
                "image_size {} is not a multiple of patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return Err(VitError::Config(format!(
                "embed_dim {} is not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        Ok(())
    }

    pub fn num_patches(&self) -> usize {
        (self.image_size / self.patch_size).pow(2)
    }

    /// Tokens per image including the class token.
    pub fn seq_len(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn patch_dim(&self) -> usize {
        self.in_channels * self.patch_size * self.patch_size
    }

    /// Closed-form parameter count of the layout described by [`params::layout`].
    pub fn param_count(&self) -> usize {
        let d = self.embed_dim;
        let hidden = self.mlp_ratio * d;
        let patch = d * self.patch_dim() + d;
        let pos = self.seq_len() * d;
        let block = 2 * d                      // norm1
            + 3 * d * d + 3 * d                // qkv
            + d * d + d                        // proj
            + 2 * d                            // norm2
            + hidden * d + hidden              // fc1
            + d * hidden + d; // fc2
        let head = self.num_classes * d + self.num_classes;
        patch + pos + d + self.depth * block + 2 * d + head
    }
}
