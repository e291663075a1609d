//! Pixel operations behind the augmentation suite.
//!
//! Everything is integer arithmetic over 8-bit RGB so outputs are
//! bit-reproducible across platforms. Rotation uses Q16.16 fixed point
//! with sin/cos quantized to the same grid.

use image::RgbImage;

use super::rng::Xorshift64Star;

/// Adds `delta` (possibly negative) to every channel, clamping to [0, 255].
pub fn brighten(img: &RgbImage, delta: i32) -> RgbImage {
    let mut out = img.clone();
    for p in out.pixels_mut() {
        for c in &mut p.0 {
            *c = (i32::from(*c) + delta).clamp(0, 255) as u8;
        }
    }
    out
}

/// BT.601 integer luma; output has R = G = B at every pixel.
pub fn grayscale(img: &RgbImage) -> RgbImage {
    let mut out = img.clone();
    for p in out.pixels_mut() {
        let [r, g, b] = p.0;
        let luma =
            ((299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b) + 500) / 1000) as u8;
        p.0 = [luma, luma, luma];
    }
    out
}

/// Box blur with edge replication; window mean with round-half-up.
pub fn box_blur(img: &RgbImage, radius: u32) -> RgbImage {
    if radius == 0 {
        return img.clone();
    }
    let (w, h) = img.dimensions();
    let r = radius as i64;
    let area = ((2 * r + 1) * (2 * r + 1)) as u64;
    let mut out = RgbImage::new(w, h);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut sums = [0u64; 3];
            for dy in -r..=r {
                let sy = (y + dy).clamp(0, h as i64 - 1) as u32;
                for dx in -r..=r {
                    let sx = (x + dx).clamp(0, w as i64 - 1) as u32;
                    let p = img.get_pixel(sx, sy).0;
                    for (sum, c) in sums.iter_mut().zip(p) {
                        *sum += u64::from(c);
                    }
                }
            }
            let p = out.get_pixel_mut(x as u32, y as u32);
            for (c, sum) in p.0.iter_mut().zip(sums) {
                *c = ((sum + area / 2) / area) as u8;
            }
        }
    }
    out
}

/// Unsharp mask with amount fixed at 1.0: `clamp(2*in - blur(in))`.
pub fn unsharp(img: &RgbImage, blur_radius: u32) -> RgbImage {
    let blurred = box_blur(img, blur_radius);
    let mut out = img.clone();
    for (p, b) in out.pixels_mut().zip(blurred.pixels()) {
        for (c, bc) in p.0.iter_mut().zip(b.0) {
            *c = (2 * i32::from(*c) - i32::from(bc)).clamp(0, 255) as u8;
        }
    }
    out
}

/// Axis-aligned rectangle in normalized [0, 1] image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormRect {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl NormRect {
    /// Pixel bounds (x0, y0, x1, y1), exclusive on the high side, clamped
    /// to the image.
    pub fn to_pixels(&self, w: u32, h: u32) -> (u32, u32, u32, u32) {
        let clamp01 = |v: f64| v.clamp(0.0, 1.0);
        let x0 = (clamp01(self.x) * f64::from(w)).floor() as u32;
        let y0 = (clamp01(self.y) * f64::from(h)).floor() as u32;
        let x1 = (clamp01(self.x + self.width) * f64::from(w)).ceil() as u32;
        let y1 = (clamp01(self.y + self.height) * f64::from(h)).ceil() as u32;
        (x0.min(w), y0.min(h), x1.min(w), y1.min(h))
    }
}

/// Fills the rectangle with solid black.
pub fn occlude(img: &RgbImage, rect: NormRect) -> RgbImage {
    let mut out = img.clone();
    let (x0, y0, x1, y1) = rect.to_pixels(out.width(), out.height());
    for y in y0..y1 {
        for x in x0..x1 {
            out.put_pixel(x, y, image::Rgb([0, 0, 0]));
        }
    }
    out
}

const FP_SHIFT: u32 = 16;
const FP_ONE: i64 = 1 << FP_SHIFT;

/// sin/cos of an angle in tenths of a degree, quantized to Q16.16.
fn sin_cos_q16(angle_decideg: i32) -> (i64, i64) {
    let radians = f64::from(angle_decideg) * std::f64::consts::PI / 1800.0;
    let s = (radians.sin() * FP_ONE as f64).round() as i64;
    let c = (radians.cos() * FP_ONE as f64).round() as i64;
    (s, c)
}

/// Rotates around the image center by `angle_decideg` tenths of a degree,
/// expanding the canvas to fit and filling uncovered pixels with black.
/// Nearest-neighbor sampling in fixed point.
pub fn rotate_expand(img: &RgbImage, angle_decideg: i32) -> RgbImage {
    let (w, h) = img.dimensions();
    let (s, c) = sin_cos_q16(angle_decideg);
    let (sa, ca) = (s.abs(), c.abs());
    let new_w = ((i64::from(w) * ca + i64::from(h) * sa + FP_ONE - 1) >> FP_SHIFT) as u32;
    let new_h = ((i64::from(w) * sa + i64::from(h) * ca + FP_ONE - 1) >> FP_SHIFT) as u32;
    let mut out = RgbImage::from_pixel(new_w, new_h, image::Rgb([0, 0, 0]));
    // Pixel-center coordinates in Q16.16.
    let src_cx = (i64::from(w) * FP_ONE) / 2;
    let src_cy = (i64::from(h) * FP_ONE) / 2;
    let dst_cx = (i64::from(new_w) * FP_ONE) / 2;
    let dst_cy = (i64::from(new_h) * FP_ONE) / 2;
    for oy in 0..new_h {
        let dy = (i64::from(oy) << FP_SHIFT) + FP_ONE / 2 - dst_cy;
        for ox in 0..new_w {
            let dx = (i64::from(ox) << FP_SHIFT) + FP_ONE / 2 - dst_cx;
            // Inverse rotation maps destination back onto the source.
            let sx_q = src_cx + ((dx * c + dy * s) >> FP_SHIFT);
            let sy_q = src_cy + ((-dx * s + dy * c) >> FP_SHIFT);
            let sx = sx_q >> FP_SHIFT;
            let sy = sy_q >> FP_SHIFT;
            if (0..i64::from(w)).contains(&sx) && (0..i64::from(h)).contains(&sy) {
                out.put_pixel(ox, oy, *img.get_pixel(sx as u32, sy as u32));
            }
        }
    }
    out
}

/// Per-channel additive noise with the given sigma, clamped to [0, 255].
pub fn gaussian_noise(img: &RgbImage, sigma: u32, rng: &mut Xorshift64Star) -> RgbImage {
    let mut out = img.clone();
    for p in out.pixels_mut() {
        for c in &mut p.0 {
            let delta = rng.next_gauss_delta(sigma);
            *c = (i32::from(*c) + delta).clamp(0, 255) as u8;
        }
    }
    out
}

/// Flips pixels to black or white with probability `1/flip_denominator`
/// each; salt and pepper are equally likely.
pub fn salt_pepper(img: &RgbImage, flip_denominator: u64, rng: &mut Xorshift64Star) -> RgbImage {
    let mut out = img.clone();
    for p in out.pixels_mut() {
        if rng.next_below(flip_denominator) == 0 {
            let v = if rng.next_u64() & 1 == 1 { 255 } else { 0 };
            p.0 = [v, v, v];
        }
    }
    out
}
