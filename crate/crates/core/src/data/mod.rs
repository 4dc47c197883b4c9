//! Scene rasters, labels and the patch dataset built from them.
//!
//! The flow is: rasters ([`SceneRaster`], [`LabelRaster`]) → patch records
//! ([`tile_scene`]) → a leakage-free train/val assignment
//! ([`stratified_block_split`]) → normalization statistics computed from the
//! training patches only ([`compute_norm_stats`]).

mod manifest;
mod raster;
mod split;
mod stats;
mod synthetic;
mod taxonomy;
mod tiling;

pub use manifest::{
    decode_manifest, encode_manifest, manifest_hash, read_manifest, write_manifest, ManifestRow, SceneStore,
};
pub use raster::{
    decode_labels, decode_scene, encode_labels, encode_scene, read_labels, read_scene, validate_pair, write_labels,
    write_scene, LabelRaster, SceneRaster, INVALID_CODE, LABEL_MAGIC, SAR_CHANNELS, SCENE_MAGIC,
};
pub use split::{class_divergence, stratified_block_split, Split, SplitManifest, SplitParams};
pub use stats::{
    compute_norm_stats, normalize_patch, read_stats, write_stats, ChannelStats, NormalizationStats, STD_FLOOR,
};
pub use synthetic::{generate_synthetic_scene, ClassShare, CorpusSpec, Region, SceneSpec, Texture};
pub use taxonomy::ClassTaxonomy;
pub use tiling::{tile_scene, BlockId, PatchRecord, TileParams};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invalid scene spec: {0}")]
    Spec(String),
    #[error("class divergence {achieved:.4} exceeds tolerance {tolerance}")]
    Stratification { achieved: f64, tolerance: f64 },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Scene identifiers end up in file names and block ids.
pub(crate) fn check_scene_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(DataError::Input(format!(
            "scene id {id:?} must be non-empty and use only [A-Za-z0-9_.-]"
        )))
    }
}
