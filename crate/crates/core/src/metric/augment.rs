//! Training-time augmentation for pair generation.

use image::{GrayImage, Luma};
use rand::Rng;

use super::config::{MetricTrainConfig, MirrorAxis};
use crate::raster::{GlyphImage, BACKGROUND};

fn sample_bilinear(img: &GrayImage, x: f64, y: f64) -> f64 {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let fetch = |xi: i64, yi: i64| -> f64 {
        if xi < 0 || yi < 0 || xi >= w || yi >= h {
            f64::from(BACKGROUND)
        } else {
            f64::from(img.get_pixel(xi as u32, yi as u32).0[0])
        }
    };
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (xi, yi) = (x0 as i64, y0 as i64);
    let top = fetch(xi, yi) * (1.0 - fx) + fetch(xi + 1, yi) * fx;
    let bottom = fetch(xi, yi + 1) * (1.0 - fx) + fetch(xi + 1, yi + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Rotation by `angle` radians about the center, optional left–right flip,
/// then a shift by `(dx, dy)` pixels. Uncovered pixels become background.
fn warp(img: &GrayImage, angle: f64, mirror: bool, dx: f64, dy: f64) -> GrayImage {
    let (w, h) = img.dimensions();
    let (cx, cy) = ((f64::from(w) - 1.0) / 2.0, (f64::from(h) - 1.0) / 2.0);
    let (sin, cos) = angle.sin_cos();
    GrayImage::from_fn(w, h, |x, y| {
        // Invert: undo the shift, then the rotation, then the mirror.
        let (ux, uy) = (f64::from(x) - dx - cx, f64::from(y) - dy - cy);
        let (rx, ry) = (cos * ux + sin * uy, -sin * ux + cos * uy);
        let sx = if mirror { -rx } else { rx } + cx;
        let sy = ry + cy;
        Luma([sample_bilinear(img, sx, sy).round().clamp(0.0, 255.0) as u8])
    })
}

fn add_border_band<R: Rng>(img: &mut GrayImage, max_fraction: f64, rng: &mut R) {
    let (w, h) = img.dimensions();
    let side = rng.random_range(0..4);
    let extent = if side < 2 { h } else { w };
    let max_t = ((f64::from(extent) * max_fraction).round() as u32).max(1);
    let t = rng.random_range(1..=max_t);
    let shade = Luma([rng.random_range(0..=80u8)]);
    for y in 0..h {
        for x in 0..w {
            let inside = match side {
                0 => y < t,
                1 => y >= h - t,
                2 => x < t,
                _ => x >= w - t,
            };
            if inside {
                img.put_pixel(x, y, shade);
            }
        }
    }
}

fn add_occlusion<R: Rng>(img: &mut GrayImage, max_radius: f64, rng: &mut R) {
    let (w, h) = img.dimensions();
    let r_max = (f64::from(w.min(h)) * max_radius).max(1.0);
    let r = rng.random_range(1.0..=r_max);
    let cx = rng.random_range(0.0..f64::from(w));
    let cy = rng.random_range(0.0..f64::from(h));
    // Half of the occlusions erase strokes, half darken.
    let fill = if rng.random_bool(0.5) {
        Luma([BACKGROUND])
    } else {
        Luma([rng.random_range(0..=60u8)])
    };
    for y in 0..h {
        for x in 0..w {
            let (ddx, ddy) = (f64::from(x) - cx, f64::from(y) - cy);
            if ddx * ddx + ddy * ddy <= r * r {
                img.put_pixel(x, y, fill);
            }
        }
    }
}

/// With probability `augment_probability`, applies a random rotation and
/// shift, optionally a left–right mirror, a border band and a circular
/// occlusion. Otherwise returns the input unchanged.
///
/// The config is assumed validated; a vertical mirror setting is ignored.
pub fn augment<R: Rng>(image: &GlyphImage, config: &MetricTrainConfig, rng: &mut R) -> GlyphImage {
    if !rng.random_bool(config.augment_probability) {
        return image.clone();
    }
    let bound = config.rotation_degrees.to_radians();
    let angle = if bound > 0.0 { rng.random_range(-bound..=bound) } else { 0.0 };
    let (w, h) = image.dimensions();
    let shift = |extent: u32, rng: &mut R| {
        let m = f64::from(extent) * config.shift_fraction;
        if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 }
    };
    let dx = shift(w, rng);
    let dy = shift(h, rng);
    let mirror = config.mirror == MirrorAxis::Horizontal && rng.random_bool(config.mirror_probability);
    let mut out = warp(image, angle, mirror, dx, dy);
    if rng.random_bool(config.band_probability) {
        add_border_band(&mut out, config.band_max_fraction, rng);
    }
    if rng.random_bool(config.occlusion_probability) {
        add_occlusion(&mut out, config.occlusion_max_radius, rng);
    }
    out
}
