//! Synthetic SAR-like scenes for desk-scale experiments.
//!
//! Each region carries an SA code; each code has a texture: per-channel dB
//! mean and standard deviation plus a correlation length. Texture noise is
//! white Gaussian noise smoothed by a separable box filter of radius
//! `corr_len` and rescaled so every pixel keeps unit marginal variance.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_scene_id, DataError, LabelRaster, Result, SceneRaster, SAR_CHANNELS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    /// HH and HV means in dB.
    pub mean_db: [f32; 2],
    /// HH and HV standard deviations in dB.
    pub std_db: [f32; 2],
    /// Box-filter radius in pixels; 0 gives white noise.
    pub corr_len: usize,
}

/// Axis-aligned rectangle labelled with one SA code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub row0: usize,
    pub col0: usize,
    pub height: usize,
    pub width: usize,
    pub code: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub scene_id: String,
    pub width: usize,
    pub height: usize,
    pub pixel_spacing_m: f64,
    /// Must cover the scene exactly once.
    pub regions: Vec<Region>,
    pub textures: BTreeMap<u8, Texture>,
    pub seed: u64,
}

impl SceneSpec {
    fn validate(&self) -> Result<()> {
        check_scene_id(&self.scene_id).map_err(|e| DataError::Spec(e.to_string()))?;
        if self.width == 0 || self.height == 0 {
            return Err(DataError::Spec("scene dimensions must be positive".into()));
        }
        let mut cover = vec![0u8; self.width * self.height];
        for (i, r) in self.regions.iter().enumerate() {
            if r.width == 0 || r.height == 0 {
                return Err(DataError::Spec(format!("region {i} is empty")));
            }
            if r.row0 + r.height > self.height || r.col0 + r.width > self.width {
                return Err(DataError::Spec(format!("region {i} extends outside the scene")));
            }
            let tex = self
                .textures
                .get(&r.code)
                .ok_or_else(|| DataError::Spec(format!("region {i}: no texture for code {}", r.code)))?;
            if tex.std_db.iter().chain(&tex.mean_db).any(|v| !v.is_finite()) || tex.std_db.iter().any(|&s| s < 0.0) {
                return Err(DataError::Spec(format!("texture for code {} is invalid", r.code)));
            }
            for row in r.row0..r.row0 + r.height {
                for cell in &mut cover[row * self.width + r.col0..row * self.width + r.col0 + r.width] {
                    if *cell != 0 {
                        return Err(DataError::Spec(format!(
                            "region {i} overlaps an earlier region at row {row}"
                        )));
                    }
                    *cell = 1;
                }
            }
        }
        if let Some(gap) = cover.iter().position(|&c| c == 0) {
            return Err(DataError::Spec(format!(
                "pixel ({}, {}) is not covered by any region",
                gap / self.width,
                gap % self.width
            )));
        }
        Ok(())
    }
}

/// Renders a scene and its labels. Identical specs give identical bytes.
pub fn generate_synthetic_scene(spec: &SceneSpec) -> Result<(SceneRaster, LabelRaster)> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut codes = vec![0u8; w * h];
    for r in &spec.regions {
        for row in r.row0..r.row0 + r.height {
            codes[row * w + r.col0..row * w + r.col0 + r.width].fill(r.code);
        }
    }

    let present: std::collections::BTreeSet<u8> = spec.regions.iter().map(|r| r.code).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = vec![0f32; SAR_CHANNELS * w * h];
    for &code in &present {
        let tex = spec.textures[&code];
        for c in 0..SAR_CHANNELS {
            let field = correlated_noise(&mut rng, w, h, tex.corr_len);
            let plane = &mut data[c * w * h..(c + 1) * w * h];
            for ((px, &lbl), &z) in plane.iter_mut().zip(&codes).zip(&field) {
                if lbl == code {
                    *px = (tex.mean_db[c] as f64 + tex.std_db[c] as f64 * z) as f32;
                }
            }
        }
    }
    Ok((
        SceneRaster::new(spec.scene_id.clone(), w, h, spec.pixel_spacing_m, data)?,
        LabelRaster::new(w, h, codes)?,
    ))
}

fn correlated_noise(rng: &mut ChaCha8Rng, w: usize, h: usize, radius: usize) -> Vec<f64> {
    let white: Vec<f64> = (0..w * h).map(|_| StandardNormal.sample(rng)).collect();
    if radius == 0 {
        return white;
    }
    let mut rows = vec![0f64; w * h];
    for r in 0..h {
        box_pass(
            &white[r * w..(r + 1) * w],
            1,
            &mut rows[r * w..(r + 1) * w],
            1,
            w,
            radius,
        );
    }
    let mut out = vec![0f64; w * h];
    for c in 0..w {
        box_pass(&rows[c..], w, &mut out[c..], w, h, radius);
    }
    out
}

/// Windowed sum over `len` strided samples divided by sqrt(window count).
fn box_pass(src: &[f64], stride: usize, dst: &mut [f64], dstride: usize, len: usize, radius: usize) {
    let mut prefix = vec![0f64; len + 1];
    for i in 0..len {
        prefix[i + 1] = prefix[i] + src[i * stride];
    }
    for i in 0..len {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius + 1).min(len);
        dst[i * dstride] = (prefix[hi] - prefix[lo]) / ((hi - lo) as f64).sqrt();
    }
}

/// Share of grid cells given to one SA code.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassShare {
    pub code: u8,
    pub share: f64,
}

/// A multi-scene corpus laid out as square cells, each filled with one code.
///
/// Cell counts per code are fixed by largest-remainder rounding of the
/// shares over the whole corpus, then shuffled across all scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub scenes: usize,
    pub width: usize,
    pub height: usize,
    pub cell_size: usize,
    pub pixel_spacing_m: f64,
    pub shares: Vec<ClassShare>,
    pub textures: BTreeMap<u8, Texture>,
    pub seed: u64,
}

impl Default for CorpusSpec {
    /// Six classes with Old/Multi-Year Ice (code 97) holding 2 % of cells.
    fn default() -> Self {
        let tex = |hh: f32, hv: f32, s: f32, corr: usize| Texture {
            mean_db: [hh, hv],
            std_db: [s, s],
            corr_len: corr,
        };
        let textures = BTreeMap::from([
            (55, tex(-21.0, -29.0, 2.5, 0)), // water
            (81, tex(-24.0, -31.0, 1.5, 1)), // new ice
            (84, tex(-17.0, -26.0, 2.0, 1)), // young ice
            (93, tex(-14.0, -23.0, 2.5, 1)), // first-year ice
            (97, tex(-12.5, -20.5, 2.5, 1)), // multi-year ice
            (98, tex(-8.0, -17.0, 3.0, 2)),  // glacier ice
        ]);
        let shares = [(55, 0.30), (81, 0.10), (84, 0.15), (93, 0.33), (97, 0.02), (98, 0.10)]
            .into_iter()
            .map(|(code, share)| ClassShare { code, share })
            .collect();
        Self {
            scenes: 12,
            width: 240,
            height: 240,
            cell_size: 24,
            pixel_spacing_m: 40.0,
            shares,
            textures,
            seed: 2024,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.scenes == 0 {
            return Err(DataError::Spec("corpus needs at least one scene".into()));
        }
        if self.cell_size == 0
            || !self.width.is_multiple_of(self.cell_size)
            || !self.height.is_multiple_of(self.cell_size)
        {
            return Err(DataError::Spec(format!(
                "scene {}x{} is not a whole number of {}-pixel cells",
                self.width, self.height, self.cell_size
            )));
        }
        if self.shares.is_empty() || self.shares.iter().any(|s| !(s.share >= 0.0 && s.share.is_finite())) {
            return Err(DataError::Spec("class shares must be non-negative".into()));
        }
        let total: f64 = self.shares.iter().map(|s| s.share).sum();
        if total <= 0.0 {
            return Err(DataError::Spec("class shares sum to zero".into()));
        }
        Ok(())
    }

    /// Per-scene specs in scene order (`scene_000`, `scene_001`, ...).
    pub fn scene_specs(&self) -> Result<Vec<SceneSpec>> {
        self.validate()?;
        let gw = self.width / self.cell_size;
        let gh = self.height / self.cell_size;
        let per_scene = gw * gh;
        let total_cells = per_scene * self.scenes;

        let share_sum: f64 = self.shares.iter().map(|s| s.share).sum();
        let exact: Vec<f64> = self
            .shares
            .iter()
            .map(|s| s.share / share_sum * total_cells as f64)
            .collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        let short = total_cells - counts.iter().sum::<usize>();
        for &i in order.iter().take(short) {
            counts[i] += 1;
        }

        let mut cells: Vec<u8> = self
            .shares
            .iter()
            .zip(&counts)
            .flat_map(|(s, &n)| std::iter::repeat_n(s.code, n))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        cells.shuffle(&mut rng);

        Ok(cells
            .chunks(per_scene)
            .enumerate()
            .map(|(i, chunk)| {
                let regions = chunk
                    .iter()
                    .enumerate()
                    .map(|(j, &code)| Region {
                        row0: (j / gw) * self.cell_size,
                        col0: (j % gw) * self.cell_size,
                        height: self.cell_size,
                        width: self.cell_size,
                        code,
                    })
                    .collect();
                SceneSpec {
                    scene_id: format!("scene_{i:03}"),
                    width: self.width,
                    height: self.height,
                    pixel_spacing_m: self.pixel_spacing_m,
                    regions,
                    textures: self.textures.clone(),
                    seed: rng.gen(),
                }
            })
            .collect())
    }
}
