//! Per-channel normalization statistics from training patches.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::manifest_hash;
use super::{io_err, DataError, ManifestRow, Result, SceneStore, Split, SAR_CHANNELS};

/// Lower bound applied to a channel's standard deviation.
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub channels: Vec<ChannelStats>,
    /// Pixels seen per channel.
    pub count: u64,
    pub source_split: String,
    /// Hash of the train rows the statistics were computed from.
    pub manifest_hash: String,
}

#[derive(Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }
}

/// Mean and population standard deviation of each channel over every pixel
/// of every train patch. Rows marked val or unsplit are never read.
pub fn compute_norm_stats(rows: &[ManifestRow], store: &mut SceneStore) -> Result<NormalizationStats> {
    let train: Vec<ManifestRow> = rows.iter().filter(|r| r.split == Some(Split::Train)).cloned().collect();
    if train.is_empty() {
        return Err(DataError::Input("manifest has no train patches".into()));
    }
    let mut acc = [Welford::default(); SAR_CHANNELS];
    for row in &train {
        let patch = store.patch(&row.record)?;
        let plane = patch.len() / SAR_CHANNELS;
        for (c, w) in acc.iter_mut().enumerate() {
            for &v in &patch[c * plane..(c + 1) * plane] {
                if !v.is_finite() {
                    return Err(DataError::Input(format!(
                        "non-finite pixel in train patch {}@{},{}",
                        row.record.scene_id, row.record.row0, row.record.col0
                    )));
                }
                w.push(v as f64);
            }
        }
    }
    Ok(NormalizationStats {
        channels: acc
            .iter()
            .map(|w| ChannelStats {
                mean: w.mean,
                std: (w.m2 / w.n as f64).sqrt().max(STD_FLOOR),
            })
            .collect(),
        count: acc[0].n,
        source_split: Split::Train.to_string(),
        manifest_hash: manifest_hash(&train)?,
    })
}

/// In-place `(x − mean) / std` on a channel-major patch.
pub fn normalize_patch(patch: &mut [f32], stats: &NormalizationStats) {
    let plane = patch.len() / stats.channels.len();
    for (c, s) in stats.channels.iter().enumerate() {
        for v in &mut patch[c * plane..(c + 1) * plane] {
            *v = ((*v as f64 - s.mean) / s.std) as f32;
        }
    }
}

pub fn write_stats(stats: &NormalizationStats, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(stats).map_err(|e| DataError::Format(format!("stats: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn read_stats(path: &Path) -> Result<NormalizationStats> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let stats: NormalizationStats =
        serde_json::from_str(&text).map_err(|e| DataError::Format(format!("{}: {e}", path.display())))?;
    if stats.channels.len() != SAR_CHANNELS || stats.channels.iter().any(|c| c.std.is_nan() || c.std <= 0.0) {
        return Err(DataError::Format(format!(
            "{}: expected {SAR_CHANNELS} channels with positive std",
            path.display()
        )));
    }
    Ok(stats)
}
