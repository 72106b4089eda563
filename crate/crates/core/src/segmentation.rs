//! Sign-candidate isolation for facsimile regions.
//!
//! binarize (local mean) → 8-connected components → size filter → column
//! clustering → reading-ordered, canonical-size crops.

use image::{GrayImage, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{self, GlyphImage, BACKGROUND};

/// Foreground (ink) mask with the same dimensions as its source image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: u32,
    height: u32,
    pixels: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            pixels: vec![false; (width * height) as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.set(x, y, f(x, y));
            }
        }
        img
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.pixels[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width;
        self.pixels[(y * w + x) as usize] = v;
    }

    pub fn count_foreground(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }
}

/// Local-mean adaptive threshold with edge replication.
///
/// A pixel is ink iff `intensity < mean(window×window) − offset`.
pub fn binarize_adaptive(gray: &GrayImage, window: u32, offset: f64) -> Result<BinaryImage> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::Config(format!("window must be odd and >= 3, got {window}")));
    }
    let (w, h) = gray.dimensions();
    if w == 0 || h == 0 {
        return Ok(BinaryImage::new(w, h));
    }
    // A single pixel replicated in every direction has itself as local mean.
    if w == 1 && h == 1 {
        return Ok(BinaryImage::new(1, 1));
    }
    if window > w && window > h {
        return Err(Error::Config(format!(
            "window {window} exceeds both image dimensions {w}x{h}"
        )));
    }

    let r = (window / 2) as i64;
    let pw = w as i64 + 2 * r;
    let ph = h as i64 + 2 * r;
    // Integral image over the edge-replicated padding, one extra row/col of zeros.
    let stride = (pw + 1) as usize;
    let mut integral = vec![0f64; stride * (ph + 1) as usize];
    for py in 0..ph {
        let sy = (py - r).clamp(0, h as i64 - 1) as u32;
        let mut row_sum = 0f64;
        for px in 0..pw {
            let sx = (px - r).clamp(0, w as i64 - 1) as u32;
            row_sum += f64::from(gray.get_pixel(sx, sy).0[0]);
            let idx = (py as usize + 1) * stride + px as usize + 1;
            integral[idx] = integral[idx - stride] + row_sum;
        }
    }

    let area = f64::from(window * window);
    let win = window as usize;
    let mut out = BinaryImage::new(w, h);
    for y in 0..h as usize {
        for x in 0..w as usize {
            // Window in padded coords spans [x, x+window) × [y, y+window).
            let sum = integral[(y + win) * stride + x + win] - integral[y * stride + x + win]
                - integral[(y + win) * stride + x]
                + integral[y * stride + x];
            let mean = sum / area;
            let v = f64::from(gray.get_pixel(x as u32, y as u32).0[0]);
            if v < mean - offset {
                out.set(x as u32, y as u32, true);
            }
        }
    }
    Ok(out)
}

/// One 8-connected foreground region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentBox {
    /// Half-open bounding box `(x0, y0, x1, y1)`.
    pub bbox: (u32, u32, u32, u32),
    pub area: usize,
    pub centroid: (f64, f64),
    /// Foreground pixels in raster order.
    #[serde(skip)]
    pub pixels: Vec<(u32, u32)>,
}

impl ComponentBox {
    pub fn from_pixels(mut pixels: Vec<(u32, u32)>) -> Self {
        assert!(!pixels.is_empty(), "component without pixels");
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        let (mut sx, mut sy) = (0f64, 0f64);
        for &(x, y) in &pixels {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x + 1);
            y1 = y1.max(y + 1);
            sx += f64::from(x);
            sy += f64::from(y);
        }
        let n = pixels.len() as f64;
        Self {
            bbox: (x0, y0, x1, y1),
            area: pixels.len(),
            centroid: (sx / n, sy / n),
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.bbox.2 - self.bbox.0
    }

    pub fn height(&self) -> u32 {
        self.bbox.3 - self.bbox.1
    }

    /// Copy shifted by `(dx, dy)`; coordinates must stay non-negative.
    pub fn translated(&self, dx: i64, dy: i64) -> Self {
        let mv = |v: u32, d: i64| u32::try_from(i64::from(v) + d).expect("negative coordinate");
        let (x0, y0, x1, y1) = self.bbox;
        Self {
            bbox: (mv(x0, dx), mv(y0, dy), mv(x1, dx), mv(y1, dy)),
            area: self.area,
            centroid: (self.centroid.0 + dx as f64, self.centroid.1 + dy as f64),
            pixels: self.pixels.iter().map(|&(x, y)| (mv(x, dx), mv(y, dy))).collect(),
        }
    }
}

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        let p = parent[i as usize];
        parent[i as usize] = parent[p as usize];
        i = p;
    }
    i
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Two-pass union-find labeling with 8-connectivity.
///
/// Components are returned sorted by `(y0, x0)`, ties by first pixel.
pub fn extract_components(binary: &BinaryImage) -> Vec<ComponentBox> {
    let (w, h) = (binary.width, binary.height);
    let mut labels = vec![0u32; (w * h) as usize];
    let mut parent: Vec<u32> = vec![0];
    for y in 0..h {
        for x in 0..w {
            if !binary.get(x, y) {
                continue;
            }
            let mut neighbours = [0u32; 4];
            let mut n = 0;
            let mut push = |nx: i64, ny: i64| {
                if nx >= 0 && ny >= 0 && nx < i64::from(w) {
                    let l = labels[(ny as u32 * w + nx as u32) as usize];
                    if l != 0 {
                        neighbours[n] = l;
                        n += 1;
                    }
                }
            };
            let (xi, yi) = (i64::from(x), i64::from(y));
            push(xi - 1, yi);
            push(xi - 1, yi - 1);
            push(xi, yi - 1);
            push(xi + 1, yi - 1);
            let idx = (y * w + x) as usize;
            if n == 0 {
                let l = parent.len() as u32;
                parent.push(l);
                labels[idx] = l;
            } else {
                let first = neighbours[0];
                labels[idx] = first;
                for &other in &neighbours[1..n] {
                    union(&mut parent, first, other);
                }
            }
        }
    }

    let mut groups: Vec<Vec<(u32, u32)>> = Vec::new();
    let mut slot = vec![usize::MAX; parent.len()];
    for y in 0..h {
        for x in 0..w {
            let l = labels[(y * w + x) as usize];
            if l == 0 {
                continue;
            }
            let root = find(&mut parent, l) as usize;
            if slot[root] == usize::MAX {
                slot[root] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[root]].push((x, y));
        }
    }

    let mut comps: Vec<ComponentBox> = groups.into_iter().map(ComponentBox::from_pixels).collect();
    comps.sort_by_key(|c| (c.bbox.1, c.bbox.0, c.pixels[0].1, c.pixels[0].0));
    comps
}

/// Inclusive size bounds for kept components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeFilter {
    pub min_area: usize,
    pub max_area: usize,
    pub min_dim: u32,
    pub max_dim: u32,
}

impl SizeFilter {
    pub fn keeps(&self, c: &ComponentBox) -> bool {
        let dims_ok = |d: u32| d >= self.min_dim && d <= self.max_dim;
        c.area >= self.min_area && c.area <= self.max_area && dims_ok(c.width()) && dims_ok(c.height())
    }
}

pub fn filter_components(components: Vec<ComponentBox>, filter: &SizeFilter) -> Vec<ComponentBox> {
    components.into_iter().filter(|c| filter.keeps(c)).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnDirection {
    #[default]
    Ltr,
    Rtl,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Groups components into vertical columns.
///
/// A new column starts wherever consecutive centroid x values (sorted) are
/// more than `gap_factor × median width` apart.
pub fn cluster_columns(
    components: Vec<ComponentBox>,
    gap_factor: f64,
    direction: ColumnDirection,
) -> Vec<Vec<ComponentBox>> {
    if components.is_empty() {
        return Vec::new();
    }
    let mut widths: Vec<f64> = components.iter().map(|c| f64::from(c.width())).collect();
    let threshold = gap_factor * median(&mut widths);

    let mut sorted = components;
    sorted.sort_by(|a, b| {
        a.centroid
            .0
            .total_cmp(&b.centroid.0)
            .then(a.centroid.1.total_cmp(&b.centroid.1))
    });

    let mut columns: Vec<Vec<ComponentBox>> = Vec::new();
    let mut last_x = f64::NEG_INFINITY;
    for c in sorted {
        if columns.is_empty() || c.centroid.0 - last_x > threshold {
            columns.push(Vec::new());
        }
        last_x = c.centroid.0;
        columns.last_mut().unwrap().push(c);
    }
    for col in &mut columns {
        col.sort_by(|a, b| {
            a.centroid
                .1
                .total_cmp(&b.centroid.1)
                .then(a.centroid.0.total_cmp(&b.centroid.0))
        });
    }
    if direction == ColumnDirection::Rtl {
        columns.reverse();
    }
    columns
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    pub window: u32,
    pub offset: f64,
    pub min_area: usize,
    pub max_area: usize,
    pub min_dim: u32,
    pub max_dim: u32,
    pub gap_factor: f64,
    pub column_direction: ColumnDirection,
    pub canonical_size: u32,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            window: 35,
            offset: 10.0,
            min_area: 40,
            max_area: 60_000,
            min_dim: 3,
            max_dim: 300,
            gap_factor: 1.0,
            column_direction: ColumnDirection::Ltr,
            canonical_size: crate::corpus::DEFAULT_CANONICAL_SIZE,
        }
    }
}

impl SegmentationConfig {
    pub fn size_filter(&self) -> SizeFilter {
        SizeFilter {
            min_area: self.min_area,
            max_area: self.max_area,
            min_dim: self.min_dim,
            max_dim: self.max_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_area > self.max_area || self.min_dim > self.max_dim {
            return Err(Error::Config("size filter bounds are inverted".into()));
        }
        if self.canonical_size == 0 {
            return Err(Error::Config("canonical size must be positive".into()));
        }
        if !(self.gap_factor.is_finite() && self.gap_factor >= 0.0) {
            return Err(Error::Config("gap_factor must be a non-negative number".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SegmentedGlyph {
    pub crop: GlyphImage,
    pub bbox: ComponentBox,
    pub column_index: usize,
    pub order_index: usize,
}

const CROP_MARGIN: u32 = 2;

/// Crop of the component's own ink on a clean background, with a margin,
/// padded to square and resized to `size`.
pub fn crop_component(image: &GrayImage, comp: &ComponentBox, size: u32) -> GlyphImage {
    let (x0, y0, x1, y1) = comp.bbox;
    let cx0 = x0.saturating_sub(CROP_MARGIN);
    let cy0 = y0.saturating_sub(CROP_MARGIN);
    let cx1 = (x1 + CROP_MARGIN).min(image.width());
    let cy1 = (y1 + CROP_MARGIN).min(image.height());
    let mut crop = GrayImage::from_pixel(cx1 - cx0, cy1 - cy0, Luma([BACKGROUND]));
    for &(x, y) in &comp.pixels {
        crop.put_pixel(x - cx0, y - cy0, *image.get_pixel(x, y));
    }
    raster::to_canonical(&crop, size)
}

/// Full segmentation of one region.
pub fn segment_region(image: &GrayImage, config: &SegmentationConfig) -> Result<Vec<SegmentedGlyph>> {
    config.validate()?;
    let binary = binarize_adaptive(image, config.window, config.offset)?;
    let comps = filter_components(extract_components(&binary), &config.size_filter());
    let columns = cluster_columns(comps, config.gap_factor, config.column_direction);
    let mut out = Vec::new();
    for (ci, col) in columns.into_iter().enumerate() {
        for (oi, comp) in col.into_iter().enumerate() {
            out.push(SegmentedGlyph {
                crop: crop_component(image, &comp, config.canonical_size),
                bbox: comp,
                column_index: ci,
                order_index: oi,
            });
        }
    }
    Ok(out)
}

// 3x5 bitmap digits for the debug overlay.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

fn draw_number(img: &mut RgbImage, mut x: u32, y: u32, n: usize, color: Rgb<u8>) {
    for ch in n.to_string().bytes() {
        let glyph = DIGITS[(ch - b'0') as usize];
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3u32 {
                if bits & (0b100 >> col) != 0 {
                    let (px, py) = (x + col, y + row as u32);
                    if px < img.width() && py < img.height() {
                        img.put_pixel(px, py, color);
                    }
                }
            }
        }
        x += 4;
    }
}

/// Debug render: bounding boxes in red, column index in blue above each box.
pub fn render_overlay(image: &GrayImage, glyphs: &[SegmentedGlyph]) -> RgbImage {
    let mut out = RgbImage::from_fn(image.width(), image.height(), |x, y| {
        let v = image.get_pixel(x, y).0[0];
        Rgb([v, v, v])
    });
    let red = Rgb([220, 30, 30]);
    for g in glyphs {
        let (x0, y0, x1, y1) = g.bbox.bbox;
        for x in x0..x1 {
            out.put_pixel(x, y0, red);
            out.put_pixel(x, y1 - 1, red);
        }
        for y in y0..y1 {
            out.put_pixel(x0, y, red);
            out.put_pixel(x1 - 1, y, red);
        }
        draw_number(&mut out, x0, y0.saturating_sub(6), g.column_index, Rgb([30, 60, 220]));
    }
    out
}
