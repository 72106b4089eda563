//! Procedural glyph shapes for benchmarks, tests and demo pages.

use std::f64::consts::PI;
use std::path::Path;

use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::code::GardinerCode;
use crate::corpus::LabeledSample;
use crate::error::{Error, Result};
use crate::raster::{GlyphImage, BACKGROUND};

/// Stroke primitive in unit-square coordinates (y down).
#[derive(Debug, Clone, Copy, PartialEq)]
enum Primitive {
    Line([f64; 2], [f64; 2]),
    /// Center, radius, start and end angle in radians (counter-clockwise in image space).
    Arc([f64; 2], f64, f64, f64),
}

fn ring(c: [f64; 2], r: f64) -> Primitive {
    Primitive::Arc(c, r, 0.0, 2.0 * PI)
}

fn polyline(points: &[[f64; 2]]) -> Vec<Primitive> {
    points.windows(2).map(|w| Primitive::Line(w[0], w[1])).collect()
}

#[derive(Debug, Clone)]
pub struct GlyphTemplate {
    pub code: GardinerCode,
    primitives: Vec<Primitive>,
}

fn t(code: &str, primitives: Vec<Primitive>) -> GlyphTemplate {
    GlyphTemplate {
        code: code.parse().expect("template codes are valid"),
        primitives,
    }
}

/// The built-in shape classes. Every template is a single connected stroke
/// set, no template is the left-right mirror of another, and the list is
/// sorted by code.
pub fn templates() -> Vec<GlyphTemplate> {
    use Primitive::{Arc, Line};
    let c = [0.5, 0.5];
    let mut v = vec![
        t("Z1", vec![Line([0.5, 0.15], [0.5, 0.85])]),
        t(
            "N35",
            polyline(&[
                [0.1, 0.55],
                [0.2, 0.42],
                [0.3, 0.55],
                [0.4, 0.42],
                [0.5, 0.55],
                [0.6, 0.42],
                [0.7, 0.55],
                [0.8, 0.42],
                [0.9, 0.55],
            ]),
        ),
        t("X1", vec![Arc([0.5, 0.65], 0.35, PI, 2.0 * PI), Line([0.15, 0.65], [0.85, 0.65])]),
        t(
            "D21",
            vec![Arc([0.5, 0.833], 0.483, 1.2423 * PI, 1.7577 * PI), Arc([0.5, 0.167], 0.483, 0.2423 * PI, 0.7577 * PI)],
        ),
        t("Q3", polyline(&[[0.2, 0.2], [0.8, 0.2], [0.8, 0.8], [0.2, 0.8], [0.2, 0.2]])),
        t(
            "I10",
            vec![Arc([0.5, 0.33], 0.17, 0.5 * PI, 2.0 * PI), Arc([0.5, 0.67], 0.17, -0.5 * PI, PI)],
        ),
        t("G17", polyline(&[[0.5, 0.15], [0.85, 0.8], [0.15, 0.8], [0.5, 0.15]])),
        t("M17", vec![ring([0.5, 0.28], 0.13), Line([0.5, 0.41], [0.5, 0.87])]),
        t("N5", vec![ring(c, 0.32), Line([0.18, 0.5], [0.82, 0.5])]),
        t("O1", polyline(&[[0.42, 0.8], [0.15, 0.8], [0.15, 0.2], [0.85, 0.2], [0.85, 0.8], [0.58, 0.8]])),
        t("S29", vec![Line([0.5, 0.3], [0.5, 0.88]), Arc([0.62, 0.3], 0.12, PI, 2.0 * PI)]),
        t(
            "V28",
            polyline(&[[0.5, 0.1], [0.38, 0.25], [0.62, 0.4], [0.38, 0.55], [0.62, 0.7], [0.5, 0.88]]),
        ),
        t(
            "Y1",
            [
                polyline(&[[0.12, 0.35], [0.88, 0.35], [0.88, 0.65], [0.12, 0.65], [0.12, 0.35]]),
                vec![Line([0.5, 0.35], [0.5, 0.65])],
            ]
            .concat(),
        ),
        t(
            "Z2",
            vec![
                Line([0.15, 0.8], [0.85, 0.8]),
                Line([0.2, 0.2], [0.2, 0.8]),
                Line([0.5, 0.2], [0.5, 0.8]),
                Line([0.8, 0.2], [0.8, 0.8]),
            ],
        ),
        t(
            "Aa1",
            vec![ring(c, 0.33), Line([0.27, 0.27], [0.73, 0.73]), Line([0.73, 0.27], [0.27, 0.73])],
        ),
        t(
            "R4",
            [
                vec![Line([0.12, 0.65], [0.88, 0.65])],
                polyline(&[[0.35, 0.65], [0.5, 0.35], [0.65, 0.65]]),
            ]
            .concat(),
        ),
        t("N29", polyline(&[[0.15, 0.2], [0.85, 0.2], [0.5, 0.85], [0.15, 0.2]])),
        t("W11", vec![ring(c, 0.36)]),
        t(
            "D4",
            vec![
                Arc([0.5, 0.833], 0.483, 1.2423 * PI, 1.7577 * PI),
                Arc([0.5, 0.167], 0.483, 0.2423 * PI, 0.7577 * PI),
                Line([0.5, 0.35], [0.5, 0.65]),
            ],
        ),
        t("Q1", vec![Line([0.5, 0.15], [0.5, 0.85]), Line([0.15, 0.5], [0.85, 0.5])]),
        t("Z9", vec![Line([0.2, 0.2], [0.8, 0.8]), Line([0.8, 0.2], [0.2, 0.8])]),
        t(
            "N14",
            vec![
                Line([0.5, 0.15], [0.5, 0.85]),
                Line([0.2, 0.33], [0.8, 0.67]),
                Line([0.8, 0.33], [0.2, 0.67]),
            ],
        ),
        t("F35", vec![ring(c, 0.2), Line([0.5, 0.1], [0.5, 0.9])]),
        t("V13", vec![Line([0.15, 0.2], [0.85, 0.2]), Line([0.5, 0.2], [0.5, 0.85])]),
        t(
            "O49",
            vec![ring(c, 0.33), Line([0.5, 0.17], [0.5, 0.83]), Line([0.17, 0.5], [0.83, 0.5])],
        ),
        t("U1", polyline(&[[0.25, 0.15], [0.25, 0.82], [0.8, 0.82]])),
        t("G5", polyline(&[[0.3, 0.15], [0.3, 0.85], [0.75, 0.5], [0.3, 0.5]])),
        t("X4", polyline(&[[0.15, 0.6], [0.15, 0.4], [0.85, 0.4], [0.85, 0.6], [0.15, 0.6]])),
        t("D46", polyline(&[[0.15, 0.75], [0.85, 0.75], [0.85, 0.3]])),
    ];
    v.sort_by(|a, b| a.code.cmp(&b.code));
    v
}

pub fn template(code: &str) -> Option<GlyphTemplate> {
    templates().into_iter().find(|t| t.code.as_str() == code)
}

/// Random variation applied per rendered sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Perturbation {
    pub rotation_degrees: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Maximum translation as a fraction of the side.
    pub shift: f64,
    /// Standard deviation of per-point jitter, unit-square coordinates.
    pub jitter: f64,
    /// Stroke width range as a fraction of the side.
    pub stroke_min: f64,
    pub stroke_max: f64,
    /// Standard deviation of additive gray-level noise.
    pub noise_sigma: f64,
    /// Probability of an isolated dark speck per pixel.
    pub speckle: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            rotation_degrees: 10.0,
            scale_min: 0.85,
            scale_max: 1.05,
            shift: 0.06,
            jitter: 0.015,
            stroke_min: 0.05,
            stroke_max: 0.08,
            noise_sigma: 12.0,
            speckle: 0.002,
        }
    }
}

impl Perturbation {
    /// Mild settings that keep every glyph a single clean component.
    pub fn clean() -> Self {
        Self {
            rotation_degrees: 4.0,
            scale_min: 0.95,
            scale_max: 1.0,
            shift: 0.02,
            jitter: 0.005,
            stroke_min: 0.07,
            stroke_max: 0.08,
            noise_sigma: 4.0,
            speckle: 0.0,
        }
    }
}

fn dist_to_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - qx).powi(2) + (p[1] - qy).powi(2)).sqrt()
}

fn dist_to_arc(p: [f64; 2], c: [f64; 2], r: f64, a0: f64, a1: f64) -> f64 {
    let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
    let span = a1 - a0;
    if span >= 2.0 * PI - 1e-9 {
        return ((dx * dx + dy * dy).sqrt() - r).abs();
    }
    let ang = (dy.atan2(dx) - a0).rem_euclid(2.0 * PI);
    if ang <= span {
        ((dx * dx + dy * dy).sqrt() - r).abs()
    } else {
        let end = |a: f64| [c[0] + r * a.cos(), c[1] + r * a.sin()];
        let d = |q: [f64; 2]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
        d(end(a0)).min(d(end(a1)))
    }
}

struct Placement {
    cos: f64,
    sin: f64,
    scale: f64,
    offset: [f64; 2],
}

impl Placement {
    fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (x, y) = (p[0] - 0.5, p[1] - 0.5);
        [
            0.5 + self.scale * (self.cos * x - self.sin * y) + self.offset[0],
            0.5 + self.scale * (self.sin * x + self.cos * y) + self.offset[1],
        ]
    }
}

/// Renders `template` into a `size × size` grayscale image, dark ink on white.
pub fn render_glyph<R: Rng>(template: &GlyphTemplate, size: u32, p: &Perturbation, rng: &mut R) -> GlyphImage {
    let sym = |rng: &mut R, m: f64| if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
    let theta = sym(rng, p.rotation_degrees).to_radians();
    let place = Placement {
        cos: theta.cos(),
        sin: theta.sin(),
        scale: if p.scale_max > p.scale_min { rng.random_range(p.scale_min..=p.scale_max) } else { p.scale_min },
        offset: [sym(rng, p.shift), sym(rng, p.shift)],
    };
    let jitter = Normal::new(0.0, p.jitter.max(0.0)).expect("finite jitter");
    let jit = |rng: &mut R, q: [f64; 2]| [q[0] + jitter.sample(rng), q[1] + jitter.sample(rng)];
    let prims: Vec<Primitive> = template
        .primitives
        .iter()
        .map(|prim| match *prim {
            Primitive::Line(a, b) => Primitive::Line(place.apply(jit(rng, a)), place.apply(jit(rng, b))),
            Primitive::Arc(c, r, a0, a1) => {
                Primitive::Arc(place.apply(jit(rng, c)), r * place.scale, a0 + theta, a1 + theta)
            }
        })
        .collect();
    let stroke = if p.stroke_max > p.stroke_min { rng.random_range(p.stroke_min..=p.stroke_max) } else { p.stroke_min };
    let s = f64::from(size);
    let half = stroke * s / 2.0;
    let noise = Normal::new(0.0, p.noise_sigma.max(0.0)).expect("finite sigma");
    let mut img = GrayImage::new(size, size);
    for y in 0..size {
        for x in 0..size {
            let q = [(f64::from(x) + 0.5) / s, (f64::from(y) + 0.5) / s];
            let d = prims
                .iter()
                .map(|prim| match *prim {
                    Primitive::Line(a, b) => dist_to_segment(q, a, b),
                    Primitive::Arc(c, r, a0, a1) => dist_to_arc(q, c, r, a0, a1),
                })
                .fold(f64::INFINITY, f64::min)
                * s;
            let cover = (half - d + 0.5).clamp(0.0, 1.0);
            let mut v = 255.0 * (1.0 - cover) + 20.0 * cover;
            if p.noise_sigma > 0.0 {
                v += noise.sample(rng);
            }
            if p.speckle > 0.0 && rng.random_bool(p.speckle) {
                v = 40.0;
            }
            img.put_pixel(x, y, Luma([v.round().clamp(0.0, 255.0) as u8]));
        }
    }
    img
}

/// `counts[i]` renderings of `classes[i]`, deterministic for `seed`.
pub fn generate<'a>(
    classes: &[&'a GlyphTemplate],
    counts: &[usize],
    size: u32,
    perturbation: &Perturbation,
    seed: u64,
) -> Result<Vec<LabeledSample>> {
    if classes.len() != counts.len() {
        return Err(Error::InvalidInput(format!("{} classes but {} counts", classes.len(), counts.len())));
    }
    let mut out = Vec::new();
    for (k, (tmpl, &n)) in classes.iter().zip(counts).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(k as u64));
        for i in 0..n {
            out.push(LabeledSample {
                image: render_glyph(tmpl, size, perturbation, &mut rng),
                code: tmpl.code.clone(),
                page_id: None,
                sample_id: format!("{}/{i:04}.png", tmpl.code),
            });
        }
    }
    Ok(out)
}

/// First `n_classes` templates with `per_class` samples each.
pub fn synthetic_dataset(n_classes: usize, per_class: usize, size: u32, seed: u64) -> Result<Vec<LabeledSample>> {
    let all = templates();
    if n_classes > all.len() {
        return Err(Error::InvalidInput(format!(
            "only {} templates available, {n_classes} requested",
            all.len()
        )));
    }
    let classes: Vec<&GlyphTemplate> = all.iter().take(n_classes).collect();
    generate(&classes, &vec![per_class; n_classes], size, &Perturbation::default(), seed)
}

/// Writes samples as `root/CODE/<file>.png`, the layout [`crate::corpus::load_dataset`] reads.
pub fn save_dataset(root: &Path, samples: &[LabeledSample]) -> Result<()> {
    for s in samples {
        let path = root.join(&s.sample_id);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        s.image.save(&path)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageGlyph {
    pub code: GardinerCode,
    /// Tile the glyph was drawn into, page coordinates, half-open.
    pub tile: (u32, u32, u32, u32),
    pub column: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticPage {
    pub image: GrayImage,
    pub glyphs: Vec<PageGlyph>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PageLayout {
    pub glyph_size: u32,
    pub margin: u32,
    pub column_gap: u32,
    pub row_gap: u32,
}

impl Default for PageLayout {
    fn default() -> Self {
        Self {
            glyph_size: 48,
            margin: 30,
            column_gap: 40,
            row_gap: 24,
        }
    }
}

/// Renders `columns` (each a top-to-bottom list of codes) left to right.
pub fn render_page(columns: &[Vec<GardinerCode>], layout: &PageLayout, seed: u64) -> Result<SyntheticPage> {
    let all = templates();
    let rows = columns.iter().map(Vec::len).max().unwrap_or(0) as u32;
    let g = layout.glyph_size;
    let width = 2 * layout.margin + columns.len() as u32 * g + columns.len().saturating_sub(1) as u32 * layout.column_gap;
    let height = 2 * layout.margin + rows * g + rows.saturating_sub(1) * layout.row_gap;
    let mut image = GrayImage::from_pixel(width.max(1), height.max(1), Luma([BACKGROUND]));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perturb = Perturbation::clean();
    let mut glyphs = Vec::new();
    for (ci, col) in columns.iter().enumerate() {
        for (ri, code) in col.iter().enumerate() {
            let tmpl = all
                .iter()
                .find(|t| &t.code == code)
                .ok_or_else(|| Error::InvalidInput(format!("no template for {code}")))?;
            let tile = render_glyph(tmpl, g, &perturb, &mut rng);
            let x0 = layout.margin + ci as u32 * (g + layout.column_gap);
            let y0 = layout.margin + ri as u32 * (g + layout.row_gap);
            for (x, y, px) in tile.enumerate_pixels() {
                let dst = image.get_pixel_mut(x0 + x, y0 + y);
                dst.0[0] = dst.0[0].min(px.0[0]);
            }
            glyphs.push(PageGlyph {
                code: code.clone(),
                tile: (x0, y0, x0 + g, y0 + g),
                column: ci,
            });
        }
    }
    Ok(SyntheticPage { image, glyphs })
}
