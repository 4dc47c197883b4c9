//! Patch manifest CSV and a scene cache for reading patch pixels.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{io_err, read_scene, BlockId, DataError, PatchRecord, Result, SceneRaster, Split, SplitManifest};

/// One manifest line. `split` is `None` until the corpus has been split.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub record: PatchRecord,
    pub split: Option<Split>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    scene_id: String,
    row0: usize,
    col0: usize,
    patch_size: usize,
    class_index: usize,
    purity: f64,
    block_id: String,
    split: String,
}

impl ManifestRow {
    pub fn unsplit(records: impl IntoIterator<Item = PatchRecord>) -> Vec<Self> {
        records.into_iter().map(|record| Self { record, split: None }).collect()
    }
}

impl SplitManifest {
    pub fn rows(&self) -> Vec<ManifestRow> {
        self.entries
            .iter()
            .map(|(record, s)| ManifestRow {
                record: record.clone(),
                split: Some(*s),
            })
            .collect()
    }
}

pub fn encode_manifest(rows: &[ManifestRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        let r = &row.record;
        w.serialize(CsvRow {
            scene_id: r.scene_id.clone(),
            row0: r.row0,
            col0: r.col0,
            patch_size: r.patch_size,
            class_index: r.class_index,
            purity: r.purity,
            block_id: r.block_id.to_string(),
            split: row.split.map(|s| s.to_string()).unwrap_or_default(),
        })?;
    }
    if rows.is_empty() {
        w.write_record([
            "scene_id",
            "row0",
            "col0",
            "patch_size",
            "class_index",
            "purity",
            "block_id",
            "split",
        ])?;
    }
    w.into_inner()
        .map_err(|e| DataError::Format(format!("manifest: {}", e.error())))
}

pub fn decode_manifest(bytes: &[u8]) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_reader(bytes);
    let expected = "scene_id,row0,col0,patch_size,class_index,purity,block_id,split";
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != expected {
        return Err(DataError::Format(format!(
            "manifest header {header:?}, expected {expected:?}"
        )));
    }
    let mut out = Vec::new();
    for row in r.deserialize::<CsvRow>() {
        let row = row?;
        let split = match row.split.as_str() {
            "" => None,
            s => Some(s.parse()?),
        };
        out.push(ManifestRow {
            record: PatchRecord {
                scene_id: row.scene_id,
                row0: row.row0,
                col0: row.col0,
                patch_size: row.patch_size,
                class_index: row.class_index,
                purity: row.purity,
                block_id: BlockId::parse(&row.block_id)?,
            },
            split,
        });
    }
    Ok(out)
}

pub fn write_manifest(rows: &[ManifestRow], path: &Path) -> Result<()> {
    std::fs::write(path, encode_manifest(rows)?).map_err(io_err(path))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    decode_manifest(&std::fs::read(path).map_err(io_err(path))?)
}

/// Hex SHA-256 of the CSV encoding of `rows`.
pub fn manifest_hash(rows: &[ManifestRow]) -> Result<String> {
    Ok(hex::encode(Sha256::digest(encode_manifest(rows)?)))
}

/// Scenes keyed by id, loaded lazily from `<dir>/<scene_id>.scn` or
/// inserted directly.
#[derive(Debug, Default)]
pub struct SceneStore {
    dir: Option<PathBuf>,
    scenes: BTreeMap<String, SceneRaster>,
}

impl SceneStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            scenes: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, scene: SceneRaster) {
        self.scenes.insert(scene.scene_id.clone(), scene);
    }

    pub fn scene(&mut self, scene_id: &str) -> Result<&SceneRaster> {
        if !self.scenes.contains_key(scene_id) {
            let dir = self
                .dir
                .as_ref()
                .ok_or_else(|| DataError::Input(format!("unknown scene {scene_id:?}")))?;
            let scene = read_scene(&dir.join(format!("{scene_id}.scn")))?;
            if scene.scene_id != scene_id {
                return Err(DataError::Format(format!(
                    "file for scene {scene_id:?} holds scene {:?}",
                    scene.scene_id
                )));
            }
            self.scenes.insert(scene_id.to_string(), scene);
        }
        Ok(&self.scenes[scene_id])
    }

    /// Raw `[C × P × P]` pixels of a patch.
    pub fn patch(&mut self, record: &PatchRecord) -> Result<Vec<f32>> {
        self.scene(&record.scene_id)?
            .patch(record.row0, record.col0, record.patch_size)
    }
}
