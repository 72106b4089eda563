use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::raster::{self, GlyphImage};

const HOG_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub bins: usize,
    pub cell: u32,
    pub cells_per_block: u32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            bins: 12,
            cell: 5,
            cells_per_block: 1,
        }
    }
}

/// Unsigned-orientation HOG with hard binning, L1-sqrt block normalization and
/// a final division by the maximum absolute value.
///
/// Gradients are central differences; the outermost rows/columns get zero
/// gradient along the axis that would leave the image.
pub fn hog_descriptor(gray: &GlyphImage, config: &FeatureConfig) -> Result<Vec<f64>> {
    let (w, h) = gray.dimensions();
    let cell = config.cell;
    if cell == 0 || config.bins == 0 || config.cells_per_block == 0 {
        return Err(Error::Config(format!("invalid HOG parameters {config:?}")));
    }
    if w % cell != 0 || h % cell != 0 {
        let pad = |d: u32| (cell - d % cell) % cell;
        return Err(Error::InvalidInput(format!(
            "image {w}x{h} is not divisible by cell size {cell}; pad by {}x{} pixels",
            pad(w),
            pad(h)
        )));
    }
    let px = |x: u32, y: u32| f64::from(gray.get_pixel(x, y).0[0]) / 255.0;
    let (cells_x, cells_y) = ((w / cell) as usize, (h / cell) as usize);
    let bins = config.bins;
    let bin_width = 180.0 / bins as f64;

    let mut hist = vec![0f64; cells_x * cells_y * bins];
    for y in 0..h {
        for x in 0..w {
            let gx = if x == 0 || x == w - 1 { 0.0 } else { px(x + 1, y) - px(x - 1, y) };
            let gy = if y == 0 || y == h - 1 { 0.0 } else { px(x, y + 1) - px(x, y - 1) };
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            if angle >= 180.0 {
                angle -= 180.0;
            }
            let bin = ((angle / bin_width) as usize).min(bins - 1);
            let c = (y / cell) as usize * cells_x + (x / cell) as usize;
            hist[c * bins + bin] += mag;
        }
    }

    let cpb = config.cells_per_block as usize;
    if cpb > cells_x || cpb > cells_y {
        return Err(Error::Config(format!(
            "{cpb} cells per block exceeds the {cells_x}x{cells_y} cell grid"
        )));
    }
    let mut out = Vec::with_capacity((cells_y - cpb + 1) * (cells_x - cpb + 1) * cpb * cpb * bins);
    let mut block = Vec::with_capacity(cpb * cpb * bins);
    for by in 0..=cells_y - cpb {
        for bx in 0..=cells_x - cpb {
            block.clear();
            for cy in by..by + cpb {
                for cx in bx..bx + cpb {
                    let c = cy * cells_x + cx;
                    block.extend_from_slice(&hist[c * bins..(c + 1) * bins]);
                }
            }
            let l1: f64 = block.iter().map(|v| v.abs()).sum();
            out.extend(block.iter().map(|v| (v / (l1 + HOG_EPS)).sqrt()));
        }
    }
    max_abs_normalize(&mut out);
    Ok(out)
}

fn max_abs_normalize(v: &mut [f64]) {
    let max = v.iter().fold(0f64, |m, x| m.max(x.abs()));
    if max > 0.0 {
        v.iter_mut().for_each(|x| *x /= max);
    }
}

/// Axis and diagonal intensity profiles, each scaled to a maximum of 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Projections {
    /// Column sums, length W.
    pub proj_x: Vec<f64>,
    /// Row sums, length H.
    pub proj_y: Vec<f64>,
    /// Mean along each top-left→bottom-right diagonal, offsets −(H−1)…(W−1).
    pub diag_main: Vec<f64>,
    /// Mean along each top-right→bottom-left diagonal, `x + y` = 0…W+H−2.
    pub diag_anti: Vec<f64>,
}

pub fn projection_features(gray: &GlyphImage) -> Projections {
    let values: Vec<f64> = gray.as_raw().iter().map(|&p| f64::from(p) / 255.0).collect();
    let (w, h) = gray.dimensions();
    projections_of(&values, w as usize, h as usize)
}

fn projections_of(values: &[f64], w: usize, h: usize) -> Projections {
    let n_diag = (w + h).saturating_sub(1);
    let mut proj_x = vec![0f64; w];
    let mut proj_y = vec![0f64; h];
    let mut diag_main = vec![0f64; n_diag];
    let mut diag_anti = vec![0f64; n_diag];
    let mut len_main = vec![0u32; n_diag];
    let mut len_anti = vec![0u32; n_diag];
    for y in 0..h {
        for x in 0..w {
            let v = values[y * w + x];
            proj_x[x] += v;
            proj_y[y] += v;
            let m = x + h - 1 - y;
            diag_main[m] += v;
            len_main[m] += 1;
            diag_anti[x + y] += v;
            len_anti[x + y] += 1;
        }
    }
    for (d, &n) in diag_main.iter_mut().zip(&len_main) {
        *d /= f64::from(n);
    }
    for (d, &n) in diag_anti.iter_mut().zip(&len_anti) {
        *d /= f64::from(n);
    }
    for v in [&mut proj_x, &mut proj_y, &mut diag_main, &mut diag_anti] {
        max_abs_normalize(v);
    }
    Projections {
        proj_x,
        proj_y,
        diag_main,
        diag_anti,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Hog,
    ProjX,
    ProjY,
    DiagMain,
    DiagAnti,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSegment {
    pub kind: SegmentKind,
    pub offset: usize,
    pub len: usize,
}

/// Describes where each descriptor lives inside a [`FeatureVector`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub image_size: (u32, u32),
    pub config: FeatureConfig,
    pub segments: Vec<FeatureSegment>,
}

impl FeatureLayout {
    pub fn dim(&self) -> usize {
        self.segments.iter().map(|s| s.len).sum()
    }

    pub fn segment(&self, kind: SegmentKind) -> Option<&FeatureSegment> {
        self.segments.iter().find(|s| s.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: FeatureLayout,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn segment(&self, kind: SegmentKind) -> &[f64] {
        let s = self.layout.segment(kind).expect("segment present in layout");
        &self.values[s.offset..s.offset + s.len]
    }
}

/// Concatenated `hog, proj_x, proj_y, diag_main, diag_anti` descriptor.
///
/// Profiles are taken over the ink map (dark strokes count as mass); HOG is
/// unaffected by the inversion because orientations are unsigned.
pub fn extract_features(image: &GlyphImage, config: &FeatureConfig) -> Result<FeatureVector> {
    let hog = hog_descriptor(image, config)?;
    let (w, h) = image.dimensions();
    let ink: Vec<f64> = raster::ink_values(image).into_iter().map(f64::from).collect();
    let p = projections_of(&ink, w as usize, h as usize);

    let parts = [
        (SegmentKind::Hog, hog),
        (SegmentKind::ProjX, p.proj_x),
        (SegmentKind::ProjY, p.proj_y),
        (SegmentKind::DiagMain, p.diag_main),
        (SegmentKind::DiagAnti, p.diag_anti),
    ];
    let mut values = Vec::with_capacity(parts.iter().map(|(_, v)| v.len()).sum());
    let mut segments = Vec::with_capacity(parts.len());
    for (kind, v) in parts {
        segments.push(FeatureSegment {
            kind,
            offset: values.len(),
            len: v.len(),
        });
        values.extend(v);
    }
    Ok(FeatureVector {
        values,
        layout: FeatureLayout {
            image_size: (w, h),
            config: *config,
            segments,
        },
    })
}

/// Feature extraction over a batch, fanned out per image.
pub fn extract_features_batch(
    images: &[&GlyphImage],
    config: &FeatureConfig,
    exec: Execution,
) -> Result<Vec<FeatureVector>> {
    exec.map(images, |img| extract_features(img, config))
        .into_iter()
        .collect()
}
