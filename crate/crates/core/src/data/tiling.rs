//! Non-overlapping patch extraction with majority labels.

use std::fmt;

use super::{validate_pair, ClassTaxonomy, DataError, LabelRaster, Result, SceneRaster};

/// Leakage unit: a `B×B` group of patch positions within one scene.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId {
    pub scene_id: String,
    pub row: usize,
    pub col: usize,
}

impl BlockId {
    pub fn of(scene_id: &str, row0: usize, col0: usize, patch_size: usize, block_size: usize) -> Self {
        let span = patch_size * block_size;
        Self {
            scene_id: scene_id.to_string(),
            row: row0 / span,
            col: col0 / span,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut parts = s.rsplitn(3, '/');
        let bad = || DataError::Format(format!("block id {s:?} is not scene/row/col"));
        let col = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let row = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let scene_id = parts.next().filter(|p| !p.is_empty()).ok_or_else(bad)?;
        Ok(Self {
            scene_id: scene_id.to_string(),
            row,
            col,
        })
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.scene_id, self.row, self.col)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchRecord {
    pub scene_id: String,
    pub row0: usize,
    pub col0: usize,
    pub patch_size: usize,
    pub class_index: usize,
    /// Majority-class fraction among valid pixels.
    pub purity: f64,
    pub block_id: BlockId,
}

impl PatchRecord {
    pub fn block_for(&self, block_size: usize) -> BlockId {
        BlockId::of(&self.scene_id, self.row0, self.col0, self.patch_size, block_size)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TileParams {
    pub patch_size: usize,
    /// Minimum majority fraction ρ, in (0, 1].
    pub purity_threshold: f64,
    /// Block edge in patches, used to fill `block_id`.
    pub block_size: usize,
}

impl Default for TileParams {
    fn default() -> Self {
        Self {
            patch_size: 64,
            purity_threshold: 0.7,
            block_size: 4,
        }
    }
}

/// Cuts a scene into a stride-`P` grid and labels each patch by majority.
///
/// A patch is dropped when fewer than half its pixels carry a mapped class,
/// when its majority fraction is below the purity threshold, or when any
/// backscatter value is NaN. Right and bottom margins narrower than `P` are
/// ignored. Ties between classes go to the lower class index.
pub fn tile_scene(
    scene: &SceneRaster,
    labels: &LabelRaster,
    taxonomy: &ClassTaxonomy,
    params: &TileParams,
) -> Result<Vec<PatchRecord>> {
    validate_pair(scene, labels)?;
    let p = params.patch_size;
    if p == 0 || p > scene.width.min(scene.height) {
        return Err(DataError::Input(format!(
            "patch size {p} does not fit a {}x{} scene",
            scene.width, scene.height
        )));
    }
    if !(params.purity_threshold > 0.0 && params.purity_threshold <= 1.0) {
        return Err(DataError::Input(format!(
            "purity threshold must be in (0, 1], got {}",
            params.purity_threshold
        )));
    }
    if params.block_size == 0 {
        return Err(DataError::Input("block size must be >= 1".into()));
    }

    let k = taxonomy.num_classes();
    let mut counts = vec![0usize; k];
    let mut out = Vec::new();
    for row0 in (0..=scene.height - p).step_by(p) {
        'patch: for col0 in (0..=scene.width - p).step_by(p) {
            counts.fill(0);
            for r in row0..row0 + p {
                for c in col0..col0 + p {
                    for ch in 0..super::SAR_CHANNELS {
                        if scene.get(ch, r, c).is_nan() {
                            continue 'patch;
                        }
                    }
                    if let Some(class) = taxonomy.map_sa_code(labels.get(r, c)) {
                        counts[class] += 1;
                    }
                }
            }
            let valid: usize = counts.iter().sum();
            if 2 * valid < p * p {
                continue;
            }
            let (class_index, &majority) = counts
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .expect("at least one class");
            let purity = majority as f64 / valid as f64;
            if purity < params.purity_threshold {
                continue;
            }
            out.push(PatchRecord {
                scene_id: scene.scene_id.clone(),
                row0,
                col0,
                patch_size: p,
                class_index,
                purity,
                block_id: BlockId::of(&scene.scene_id, row0, col0, p, params.block_size),
            });
        }
    }
    Ok(out)
}
