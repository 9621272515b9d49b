use image::imageops::FilterType;
use image::Rgba;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::asset::PopupAsset;
use super::PopupError;
use crate::geometry::Rect;
use crate::imaging::Image;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterRanges {
    /// Popup width as a fraction of the background width; aspect is kept.
    pub width_fraction: (f64, f64),
    pub brightness: (f64, f64),
    pub sharpness: (f64, f64),
}

impl Default for JitterRanges {
    fn default() -> Self {
        Self { width_fraction: (0.25, 0.60), brightness: (0.7, 1.1), sharpness: (0.6, 1.4) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    /// Popup width divided by background width.
    pub scale: f64,
    pub x: i32,
    pub y: i32,
    pub width: u32,
    pub height: u32,
    pub brightness: f64,
    pub sharpness: f64,
    pub rng_seed: u64,
}

impl Placement {
    pub fn rect(&self) -> Rect {
        Rect::new(self.x, self.y, self.width, self.height)
    }
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Scales RGB toward black (factor < 1) or brighter (> 1). Factor 1 is the identity.
pub fn adjust_brightness(img: &Image, factor: f64) -> Image {
    if factor == 1.0 {
        return img.clone();
    }
    let mut out = img.clone();
    for p in out.pixels_mut() {
        for c in 0..3 {
            p[c] = clamp_u8(p[c] as f64 * factor);
        }
    }
    out
}

/// Interpolates between a 3×3 smoothed copy (factor 0) and the original
/// (factor 1); factors above 1 sharpen. Border pixels are left as is.
pub fn adjust_sharpness(img: &Image, factor: f64) -> Image {
    if factor == 1.0 {
        return img.clone();
    }
    let (w, h) = img.dimensions();
    let mut out = img.clone();
    if w < 3 || h < 3 {
        return out;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let mut acc = [0u32; 3];
            for dy in 0..3 {
                for dx in 0..3 {
                    let weight = if dx == 1 && dy == 1 { 5 } else { 1 };
                    let p = img.get_pixel(x + dx - 1, y + dy - 1);
                    for c in 0..3 {
                        acc[c] += weight * p[c] as u32;
                    }
                }
            }
            let src = img.get_pixel(x, y);
            let dst = out.get_pixel_mut(x, y);
            for c in 0..3 {
                let smooth = acc[c] as f64 / 13.0;
                dst[c] = clamp_u8(smooth + factor * (src[c] as f64 - smooth));
            }
        }
    }
    out
}

fn blend(bg: &mut Image, fg: &Image, x0: i32, y0: i32) {
    for (x, y, p) in fg.enumerate_pixels() {
        let a = p[3] as u32;
        if a == 0 {
            continue;
        }
        let dst = bg.get_pixel_mut(x0 as u32 + x, y0 as u32 + y);
        let inv = 255 - a;
        let mut out = [0u8; 4];
        for c in 0..3 {
            out[c] = ((p[c] as u32 * a + dst[c] as u32 * inv + 127) / 255) as u8;
        }
        out[3] = (a + (dst[3] as u32 * inv + 127) / 255).min(255) as u8;
        *dst = Rgba(out);
    }
}

/// Composites with an explicit placement. The popup must lie fully inside
/// the background.
pub fn composite_popup_at(bg: &Image, asset: &PopupAsset, placement: &Placement) -> Result<Image, PopupError> {
    let bounds = Rect::new(0, 0, bg.width(), bg.height());
    if placement.width == 0 || placement.height == 0 || !bounds.contains(&placement.rect()) {
        return Err(PopupError::OutOfBounds(*placement));
    }
    let popup = if (placement.width, placement.height) == asset.image.dimensions() {
        asset.image.clone()
    } else {
        image::imageops::resize(&asset.image, placement.width, placement.height, FilterType::Triangle)
    };
    let mut out = adjust_sharpness(&adjust_brightness(bg, placement.brightness), placement.sharpness);
    blend(&mut out, &popup, placement.x, placement.y);
    Ok(out)
}

fn sample(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Random placement and background jitter from `seed`, then composite.
pub fn composite_popup(bg: &Image, asset: &PopupAsset, seed: u64, ranges: &JitterRanges) -> Result<(Image, Placement), PopupError> {
    let (bw, bh) = (bg.width() as f64, bg.height() as f64);
    let (aw, ah) = (asset.image.width() as f64, asset.image.height() as f64);
    let (min_frac, max_frac) = ranges.width_fraction;
    let fit_frac = (bh * aw) / (ah * bw);
    let upper = max_frac.min(fit_frac).min(1.0);
    if upper < min_frac || aw == 0.0 || ah == 0.0 {
        return Err(PopupError::AssetTooLarge);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frac = sample(&mut rng, (min_frac, upper));
    let width = ((frac * bw).floor() as u32).clamp(1, bg.width());
    let height = ((width as f64 * ah / aw).floor() as u32).clamp(1, bg.height());
    let x = rng.gen_range(0..=bg.width() - width) as i32;
    let y = rng.gen_range(0..=bg.height() - height) as i32;
    let brightness = sample(&mut rng, ranges.brightness);
    let sharpness = sample(&mut rng, ranges.sharpness);
    let placement = Placement { scale: width as f64 / bw, x, y, width, height, brightness, sharpness, rng_seed: seed };
    let img = composite_popup_at(bg, asset, &placement)?;
    Ok((img, placement))
}
