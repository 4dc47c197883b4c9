//! Two-channel backscatter scenes and their per-pixel SA-code labels.
//!
//! Scene file (little-endian):
//! `b"ICESCN01"`, u32 width, u32 height, u32 channels, f64 pixel_spacing_m,
//! u32 id_len, id bytes, then f32 pixels channel-major, row-major within a
//! channel.
//!
//! Label file: `b"ICELBL01"`, u32 width, u32 height, then one byte per pixel
//! row-major.

use std::path::Path;

use super::{check_scene_id, io_err, DataError, Result};

pub const SCENE_MAGIC: &[u8; 8] = b"ICESCN01";
pub const LABEL_MAGIC: &[u8; 8] = b"ICELBL01";
/// HH and HV.
pub const SAR_CHANNELS: usize = 2;
/// Label value for land, invalid or unlabeled pixels.
pub const INVALID_CODE: u8 = 255;

/// dB-scaled HH/HV backscatter. `NaN` marks no-data pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneRaster {
    pub scene_id: String,
    pub width: usize,
    pub height: usize,
    pub pixel_spacing_m: f64,
    data: Vec<f32>,
}

impl SceneRaster {
    pub fn new(
        scene_id: impl Into<String>,
        width: usize,
        height: usize,
        pixel_spacing_m: f64,
        data: Vec<f32>,
    ) -> Result<Self> {
        let scene_id = scene_id.into();
        check_scene_id(&scene_id)?;
        if width == 0 || height == 0 {
            return Err(DataError::Input("scene dimensions must be positive".into()));
        }
        if !(pixel_spacing_m > 0.0 && pixel_spacing_m.is_finite()) {
            return Err(DataError::Input(format!(
                "pixel spacing must be positive, got {pixel_spacing_m}"
            )));
        }
        if data.len() != SAR_CHANNELS * width * height {
            return Err(DataError::Input(format!(
                "{} values for a {SAR_CHANNELS}x{height}x{width} scene",
                data.len()
            )));
        }
        Ok(Self {
            scene_id,
            width,
            height,
            pixel_spacing_m,
            data,
        })
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> f32 {
        self.data[(c * self.height + row) * self.width + col]
    }

    /// Copies a `size×size` window into a `[C × size × size]` buffer.
    pub fn patch(&self, row0: usize, col0: usize, size: usize) -> Result<Vec<f32>> {
        if row0 + size > self.height || col0 + size > self.width {
            return Err(DataError::Input(format!(
                "patch at ({row0},{col0}) size {size} exceeds {}x{} scene {}",
                self.height, self.width, self.scene_id
            )));
        }
        let mut out = Vec::with_capacity(SAR_CHANNELS * size * size);
        for c in 0..SAR_CHANNELS {
            let plane = self.channel(c);
            for r in row0..row0 + size {
                out.extend_from_slice(&plane[r * self.width + col0..r * self.width + col0 + size]);
            }
        }
        Ok(out)
    }
}

/// Per-pixel stage-of-development codes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelRaster {
    pub width: usize,
    pub height: usize,
    codes: Vec<u8>,
}

impl LabelRaster {
    pub fn new(width: usize, height: usize, codes: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || codes.len() != width * height {
            return Err(DataError::Input(format!(
                "{} codes for a {height}x{width} label raster",
                codes.len()
            )));
        }
        Ok(Self { width, height, codes })
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.codes[row * self.width + col]
    }
}

/// Rejects a label raster whose dimensions differ from its scene.
pub fn validate_pair(scene: &SceneRaster, labels: &LabelRaster) -> Result<()> {
    if scene.width != labels.width || scene.height != labels.height {
        return Err(DataError::Input(format!(
            "scene {} is {}x{} but its labels are {}x{}",
            scene.scene_id, scene.width, scene.height, labels.width, labels.height
        )));
    }
    Ok(())
}

pub fn encode_scene(scene: &SceneRaster) -> Vec<u8> {
    let mut out = Vec::with_capacity(40 + scene.scene_id.len() + 4 * scene.data.len());
    out.extend_from_slice(SCENE_MAGIC);
    out.extend_from_slice(&(scene.width as u32).to_le_bytes());
    out.extend_from_slice(&(scene.height as u32).to_le_bytes());
    out.extend_from_slice(&(SAR_CHANNELS as u32).to_le_bytes());
    out.extend_from_slice(&scene.pixel_spacing_m.to_le_bytes());
    out.extend_from_slice(&(scene.scene_id.len() as u32).to_le_bytes());
    out.extend_from_slice(scene.scene_id.as_bytes());
    for v in &scene.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_scene(bytes: &[u8]) -> Result<SceneRaster> {
    let mut r = Cursor::new(bytes);
    if r.take(8)? != SCENE_MAGIC {
        return Err(DataError::Format("scene file: bad magic".into()));
    }
    let width = r.u32()? as usize;
    let height = r.u32()? as usize;
    let channels = r.u32()? as usize;
    if channels != SAR_CHANNELS {
        return Err(DataError::Format(format!(
            "scene file: {channels} channels, expected {SAR_CHANNELS}"
        )));
    }
    let spacing = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
    let id_len = r.u32()? as usize;
    let id = std::str::from_utf8(r.take(id_len)?)
        .map_err(|_| DataError::Format("scene file: id is not UTF-8".into()))?
        .to_string();
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4 * channels))
        .ok_or_else(|| DataError::Format("scene file: dimensions overflow".into()))?;
    if r.remaining() != expected {
        return Err(DataError::Format(format!(
            "scene file: header {width}x{height}x{channels} needs {expected} payload bytes, found {}",
            r.remaining()
        )));
    }
    let data = r
        .take(expected)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    SceneRaster::new(id, width, height, spacing, data).map_err(|e| DataError::Format(format!("scene file: {e}")))
}

pub fn encode_labels(labels: &LabelRaster) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + labels.codes.len());
    out.extend_from_slice(LABEL_MAGIC);
    out.extend_from_slice(&(labels.width as u32).to_le_bytes());
    out.extend_from_slice(&(labels.height as u32).to_le_bytes());
    out.extend_from_slice(&labels.codes);
    out
}

pub fn decode_labels(bytes: &[u8]) -> Result<LabelRaster> {
    let mut r = Cursor::new(bytes);
    if r.take(8)? != LABEL_MAGIC {
        return Err(DataError::Format("label file: bad magic".into()));
    }
    let width = r.u32()? as usize;
    let height = r.u32()? as usize;
    if r.remaining() != width * height {
        return Err(DataError::Format(format!(
            "label file: header {width}x{height} needs {} bytes, found {}",
            width * height,
            r.remaining()
        )));
    }
    LabelRaster::new(width, height, r.take(width * height)?.to_vec())
        .map_err(|e| DataError::Format(format!("label file: {e}")))
}

pub fn write_scene(scene: &SceneRaster, path: &Path) -> Result<()> {
    std::fs::write(path, encode_scene(scene)).map_err(io_err(path))
}

pub fn read_scene(path: &Path) -> Result<SceneRaster> {
    decode_scene(&std::fs::read(path).map_err(io_err(path))?)
}

pub fn write_labels(labels: &LabelRaster, path: &Path) -> Result<()> {
    std::fs::write(path, encode_labels(labels)).map_err(io_err(path))
}

pub fn read_labels(path: &Path) -> Result<LabelRaster> {
    decode_labels(&std::fs::read(path).map_err(io_err(path))?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(DataError::Format(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
