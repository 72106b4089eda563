//! Raster helpers shared by every pipeline stage.

use std::path::Path;

use image::imageops::{self, FilterType};
use image::{DynamicImage, GrayImage, Luma};

use crate::error::Result;

/// A grayscale raster of one sign candidate or facsimile region.
///
/// RGB inputs are converted to luma on load; ink is dark on a light background.
pub type GlyphImage = GrayImage;

pub const BACKGROUND: u8 = 255;

pub fn load_gray(path: &Path) -> Result<GlyphImage> {
    Ok(image::open(path)?.to_luma8())
}

pub fn decode_gray(bytes: &[u8]) -> Result<GlyphImage> {
    Ok(image::load_from_memory(bytes)?.to_luma8())
}

pub fn encode_png(img: &DynamicImage) -> Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Centers `img` on a square canvas filled with `fill`.
pub fn pad_to_square(img: &GlyphImage, fill: u8) -> GlyphImage {
    let (w, h) = img.dimensions();
    let side = w.max(h);
    if w == h {
        return img.clone();
    }
    let mut out = GrayImage::from_pixel(side, side, Luma([fill]));
    imageops::overlay(
        &mut out,
        img,
        i64::from((side - w) / 2),
        i64::from((side - h) / 2),
    );
    out
}

/// Aspect-preserving normalization to a `size`×`size` raster.
pub fn to_canonical(img: &GlyphImage, size: u32) -> GlyphImage {
    let square = pad_to_square(img, BACKGROUND);
    if square.width() == size {
        return square;
    }
    imageops::resize(&square, size, size, FilterType::Triangle)
}

/// Ink map in `[0, 1]`: 1 for black ink, 0 for white background.
pub fn ink_values(img: &GlyphImage) -> Vec<f32> {
    img.as_raw()
        .iter()
        .map(|&p| 1.0 - f32::from(p) / 255.0)
        .collect()
}
