//! Raster helpers shared by observation capture, task generation and popup synthesis.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Rgba, RgbaImage};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::Rect;

pub type Image = RgbaImage;

pub const MARKER_RED: Rgba<u8> = Rgba([255, 0, 0, 255]);
pub const MARKER_STROKE: u32 = 3;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("box {0:?} does not intersect the image")]
    BoxOutside(Rect),
    #[error("png codec: {0}")]
    Codec(#[from] image::ImageError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Red marker drawn over an element: pure red, 3 px stroke, no fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarkerStyle {
    pub color: Rgba<u8>,
    pub stroke: u32,
}

impl Default for MarkerStyle {
    fn default() -> Self {
        Self { color: MARKER_RED, stroke: MARKER_STROKE }
    }
}

fn image_bounds(img: &Image) -> Rect {
    Rect::new(0, 0, img.width(), img.height())
}

/// Returns a copy of `img` with a rectangle outline drawn inside `bbox`.
/// The stroke lies within the box and is clipped to the image.
pub fn draw_marker(img: &Image, bbox: Rect, style: MarkerStyle) -> Result<Image, ImageError> {
    let mut out = img.clone();
    draw_marker_in_place(&mut out, bbox, style)?;
    Ok(out)
}

pub fn draw_marker_in_place(img: &mut Image, bbox: Rect, style: MarkerStyle) -> Result<(), ImageError> {
    let visible = image_bounds(img).intersection(&bbox).ok_or(ImageError::BoxOutside(bbox))?;
    let stroke = style.stroke as i64;
    for y in visible.y as i64..visible.bottom() {
        for x in visible.x as i64..visible.right() {
            if on_ring(bbox, x, y, stroke) {
                img.put_pixel(x as u32, y as u32, style.color);
            }
        }
    }
    Ok(())
}

/// Whether pixel (x, y) belongs to the `stroke`-wide outline of `bbox`.
pub fn on_ring(bbox: Rect, x: i64, y: i64, stroke: i64) -> bool {
    let inside = x >= bbox.x as i64 && y >= bbox.y as i64 && x < bbox.right() && y < bbox.bottom();
    inside
        && (x - (bbox.x as i64) < stroke
            || bbox.right() - 1 - x < stroke
            || y - (bbox.y as i64) < stroke
            || bbox.bottom() - 1 - y < stroke)
}

/// Crops `region` out of `img`, clipping to the image bounds.
pub fn crop(img: &Image, region: Rect) -> Result<Image, ImageError> {
    let r = image_bounds(img).intersection(&region).ok_or(ImageError::BoxOutside(region))?;
    Ok(image::imageops::crop_imm(img, r.x as u32, r.y as u32, r.width, r.height).to_image())
}

pub fn fill_rect(img: &mut Image, region: Rect, color: Rgba<u8>) {
    if let Some(r) = image_bounds(img).intersection(&region) {
        for y in r.y as u32..r.bottom() as u32 {
            for x in r.x as u32..r.right() as u32 {
                img.put_pixel(x, y, color);
            }
        }
    }
}

pub fn solid(width: u32, height: u32, color: Rgba<u8>) -> Image {
    RgbaImage::from_pixel(width, height, color)
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>, ImageError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn decode_png(bytes: &[u8]) -> Result<Image, ImageError> {
    Ok(image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgba8())
}

pub fn save_png(img: &Image, path: &Path) -> Result<(), ImageError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, encode_png(img)?)?;
    Ok(())
}

pub fn load_png(path: &Path) -> Result<Image, ImageError> {
    decode_png(&std::fs::read(path)?)
}

/// SHA-256 over dimensions and raw RGBA bytes, hex encoded.
pub fn content_hash(img: &Image) -> String {
    let mut hasher = Sha256::new();
    hasher.update(img.width().to_le_bytes());
    hasher.update(img.height().to_le_bytes());
    hasher.update(img.as_raw());
    hex::encode(hasher.finalize())
}

// 5x7 glyphs for candidate labels, one row per byte, low 5 bits used.
const GLYPHS: [[u8; 7]; 26] = [
    [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11], // A
    [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E], // B
    [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E], // C
    [0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E], // D
    [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F], // E
    [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10], // F
    [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F], // G
    [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11], // H
    [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E], // I
    [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C], // J
    [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11], // K
    [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F], // L
    [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11], // M
    [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11], // N
    [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E], // O
    [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10], // P
    [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D], // Q
    [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11], // R
    [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E], // S
    [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04], // T
    [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E], // U
    [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04], // V
    [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A], // W
    [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11], // X
    [0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04], // Y
    [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F], // Z
];

const LABEL_SCALE: u32 = 2;

/// Draws an uppercase letter tag (white on marker red) at the top-left corner of `bbox`.
pub fn draw_label(img: &mut Image, bbox: Rect, letter: char) {
    let idx = match letter.to_ascii_uppercase() {
        c @ 'A'..='Z' => (c as u8 - b'A') as usize,
        _ => return,
    };
    let tag_w = (5 + 2) * LABEL_SCALE;
    let tag_h = (7 + 2) * LABEL_SCALE;
    let tag = Rect::new(bbox.x, bbox.y, tag_w, tag_h);
    fill_rect(img, tag, MARKER_RED);
    let white = Rgba([255, 255, 255, 255]);
    for (row, bits) in GLYPHS[idx].iter().enumerate() {
        for col in 0..5u32 {
            if bits & (0x10 >> col) != 0 {
                let cell = Rect::new(
                    bbox.x + ((col + 1) * LABEL_SCALE) as i32,
                    bbox.y + ((row as u32 + 1) * LABEL_SCALE) as i32,
                    LABEL_SCALE,
                    LABEL_SCALE,
                );
                fill_rect(img, cell, white);
            }
        }
    }
}

pub fn label_for(index: usize) -> char {
    (b'A' + (index % 26) as u8) as char
}
