//! Deterministic image alteration suite for robustness evaluation.
//!
//! Eleven alterations, each a pure function of (image, kind, seed,
//! config): the same inputs always produce byte-identical pixels, which
//! makes golden-file tests and cross-run comparisons exact.

pub mod glyphs;
pub mod ops;
pub mod rng;

use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use glyphs::GlyphSheet;
pub use ops::NormRect;
use rng::Xorshift64Star;

/// The eleven alteration kinds, in canonical suite order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum AugmentationKind {
    Bright,
    Blurred,
    Dim,
    Grayscale,
    Occluded,
    Rotated,
    Sharp,
    GaussianNoise,
    SaltPepper,
    EmojiOverlay,
    ProfaneText,
}

impl AugmentationKind {
    pub const ALL: [AugmentationKind; 11] = [
        AugmentationKind::Bright,
        AugmentationKind::Blurred,
        AugmentationKind::Dim,
        AugmentationKind::Grayscale,
        AugmentationKind::Occluded,
        AugmentationKind::Rotated,
        AugmentationKind::Sharp,
        AugmentationKind::GaussianNoise,
        AugmentationKind::SaltPepper,
        AugmentationKind::EmojiOverlay,
        AugmentationKind::ProfaneText,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            AugmentationKind::Bright => "bright",
            AugmentationKind::Blurred => "blurred",
            AugmentationKind::Dim => "dim",
            AugmentationKind::Grayscale => "grayscale",
            AugmentationKind::Occluded => "occluded",
            AugmentationKind::Rotated => "rotated",
            AugmentationKind::Sharp => "sharp",
            AugmentationKind::GaussianNoise => "gaussian_noise",
            AugmentationKind::SaltPepper => "salt_pepper",
            AugmentationKind::EmojiOverlay => "emoji_overlay",
            AugmentationKind::ProfaneText => "profane_text",
        }
    }

    pub fn from_label(label: &str) -> Option<AugmentationKind> {
        AugmentationKind::ALL.iter().copied().find(|k| k.label() == label)
    }
}

/// Parameters of the alteration suite. Defaults match the reference
/// settings: +/-60 brightness units, blur radius 3, rotation within
/// [-30, +30] degrees, noise sigma 15, 2% salt-and-pepper flips, three
/// emoji marks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub bright_delta: i32,
    pub dim_delta: i32,
    pub blur_radius: u32,
    pub sharp_blur_radius: u32,
    /// Rotation bound in tenths of a degree; the drawn angle is uniform in
    /// `[-max, +max]`.
    pub max_rotation_decideg: i32,
    pub noise_sigma: u32,
    /// Each pixel flips with probability `1 / flip_denominator`.
    pub flip_denominator: u64,
    pub emoji_count: u32,
    /// Region to mask for `Occluded`; required when that kind runs.
    pub mask: Option<NormRect>,
    /// Phrases available to `ProfaneText`; the bundled placeholder list
    /// when empty config files omit it.
    pub profane_lexicon: Vec<String>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            bright_delta: 60,
            dim_delta: 60,
            blur_radius: 3,
            sharp_blur_radius: 2,
            max_rotation_decideg: 300,
            noise_sigma: 15,
            flip_denominator: 50,
            emoji_count: 3,
            mask: None,
            profane_lexicon: default_profane_lexicon(),
        }
    }
}

/// Bundled placeholder lexicon for the profane-text stamp.
pub fn default_profane_lexicon() -> Vec<String> {
    crate::schema::lexicon_lines(include_str!("../../data/profane_lexicon.txt"))
}

/// One altered raster plus the coordinates that reproduce it.
#[derive(Debug, Clone)]
pub struct AugmentedImage {
    pub source_id: String,
    pub kind: AugmentationKind,
    pub seed: u64,
    pub pixels: RgbImage,
}

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("occlusion requires a mask rectangle")]
    MissingMask,
    #[error("unsupported or undecodable image: {0}")]
    UnsupportedFormat(String),
    #[error("profane-text stamp requires a non-empty lexicon")]
    EmptyLexicon,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The rotation angle (tenths of a degree) that `apply` draws for this
/// seed. Exposed so angle bounds are directly testable.
pub fn rotation_angle_decideg(seed: u64, max_decideg: i32) -> i32 {
    let mut rng = Xorshift64Star::seeded(seed);
    rng.next_in_range(-i64::from(max_decideg), i64::from(max_decideg)) as i32
}

/// Applies one alteration. All randomness derives solely from `seed`.
pub fn apply(
    img: &RgbImage,
    kind: AugmentationKind,
    seed: u64,
    cfg: &AugmentConfig,
) -> Result<RgbImage, AugmentError> {
    let mut rng = Xorshift64Star::seeded(seed);
    let out = match kind {
        AugmentationKind::Bright => ops::brighten(img, cfg.bright_delta),
        AugmentationKind::Dim => ops::brighten(img, -cfg.dim_delta),
        AugmentationKind::Blurred => ops::box_blur(img, cfg.blur_radius),
        AugmentationKind::Grayscale => ops::grayscale(img),
        AugmentationKind::Sharp => ops::unsharp(img, cfg.sharp_blur_radius),
        AugmentationKind::Occluded => {
            let mask = cfg.mask.ok_or(AugmentError::MissingMask)?;
            ops::occlude(img, mask)
        }
        AugmentationKind::Rotated => {
            let angle = rotation_angle_decideg(seed, cfg.max_rotation_decideg);
            ops::rotate_expand(img, angle)
        }
        AugmentationKind::GaussianNoise => ops::gaussian_noise(img, cfg.noise_sigma, &mut rng),
        AugmentationKind::SaltPepper => ops::salt_pepper(img, cfg.flip_denominator, &mut rng),
        AugmentationKind::EmojiOverlay => overlay_emoji(img, cfg.emoji_count, &mut rng),
        AugmentationKind::ProfaneText => stamp_profane_text(img, &cfg.profane_lexicon, &mut rng)?,
    };
    Ok(out)
}

fn overlay_emoji(img: &RgbImage, count: u32, rng: &mut Xorshift64Star) -> RgbImage {
    let sheet = GlyphSheet::bundled();
    let marks = sheet.emoji();
    let mut out = img.clone();
    if marks.is_empty() {
        return out;
    }
    let (w, h) = (out.width(), out.height());
    let scale = (w.min(h) / 32).max(1);
    for _ in 0..count {
        let glyph = marks[rng.next_below(marks.len() as u64) as usize];
        let gw = glyph.width * scale;
        let gh = glyph.height * scale;
        let max_x = w.saturating_sub(gw).max(1);
        let max_y = h.saturating_sub(gh).max(1);
        let ox = rng.next_below(u64::from(max_x)) as i64;
        let oy = rng.next_below(u64::from(max_y)) as i64;
        glyphs::stamp_glyph(&mut out, glyph, ox, oy, scale, [255, 200, 0]);
    }
    out
}

fn stamp_profane_text(
    img: &RgbImage,
    lexicon: &[String],
    rng: &mut Xorshift64Star,
) -> Result<RgbImage, AugmentError> {
    if lexicon.is_empty() {
        return Err(AugmentError::EmptyLexicon);
    }
    let sheet = GlyphSheet::bundled();
    let phrase = &lexicon[rng.next_below(lexicon.len() as u64) as usize];
    let mut out = img.clone();
    let (w, h) = (out.width(), out.height());
    // Scale the stamp to roughly a third of the width, at least 1.
    let natural = glyphs::text_width(sheet, phrase, 1).max(1);
    let scale = ((w / 3) / natural).max(1);
    let tw = glyphs::text_width(sheet, phrase, scale);
    let th = glyphs::text_height(sheet, scale);
    let pad = scale.max(2);
    // Placement stays inside the top-left quadrant where possible.
    let max_x = (w / 2).saturating_sub(tw + 2 * pad).max(1);
    let max_y = (h / 2).saturating_sub(th + 2 * pad).max(1);
    let ox = rng.next_below(u64::from(max_x)) as u32;
    let oy = rng.next_below(u64::from(max_y)) as u32;
    // Solid backing rectangle, then the phrase in white.
    let rect_x1 = (ox + tw + 2 * pad).min(w);
    let rect_y1 = (oy + th + 2 * pad).min(h);
    for y in oy..rect_y1 {
        for x in ox..rect_x1 {
            out.put_pixel(x, y, image::Rgb([0, 0, 0]));
        }
    }
    glyphs::stamp_text(
        &mut out,
        sheet,
        phrase,
        i64::from(ox + pad),
        i64::from(oy + pad),
        scale,
        [255, 255, 255],
    );
    Ok(out)
}

/// Applies all eleven alterations. Variant seeds derive as `seed ^ index`
/// (index = position in [`AugmentationKind::ALL`]), so each variant is
/// independently reproducible through [`apply`].
pub fn suite(
    img: &RgbImage,
    source_id: &str,
    seed: u64,
    cfg: &AugmentConfig,
) -> Result<Vec<AugmentedImage>, AugmentError> {
    if cfg.mask.is_none() {
        return Err(AugmentError::MissingMask);
    }
    if cfg.profane_lexicon.is_empty() {
        return Err(AugmentError::EmptyLexicon);
    }
    AugmentationKind::ALL
        .iter()
        .enumerate()
        .map(|(index, &kind)| {
            let variant_seed = seed ^ index as u64;
            apply(img, kind, variant_seed, cfg).map(|pixels| AugmentedImage {
                source_id: source_id.to_string(),
                kind,
                seed: variant_seed,
                pixels,
            })
        })
        .collect()
}

/// Decodes an image file into 8-bit RGB.
pub fn load_image(path: &Path) -> Result<RgbImage, AugmentError> {
    let bytes = std::fs::read(path).map_err(|source| AugmentError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_image(&bytes)
}

/// Decodes PNG/JPEG bytes into 8-bit RGB.
pub fn decode_image(bytes: &[u8]) -> Result<RgbImage, AugmentError> {
    image::load_from_memory(bytes)
        .map(|img| img.to_rgb8())
        .map_err(|e| AugmentError::UnsupportedFormat(e.to_string()))
}

/// Lossless PNG encoding; mandatory for byte-exact golden comparisons.
pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut bytes = Vec::new();
    image::DynamicImage::ImageRgb8(img.clone())
        .write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .expect("in-memory PNG encoding cannot fail");
    bytes
}

/// (kind, attribute) cells that robustness tables mark not-applicable:
/// logo position after rotation and color scoring after grayscale.
pub fn default_not_applicable() -> Vec<(AugmentationKind, String)> {
    vec![
        (AugmentationKind::Rotated, "Logo Position".to_string()),
        (AugmentationKind::Grayscale, "Primary Color".to_string()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_image() -> RgbImage {
        RgbImage::from_fn(64, 48, |x, y| {
            image::Rgb([
                (x * 4 % 256) as u8,
                (y * 5 % 256) as u8,
                ((x * y) % 256) as u8,
            ])
        })
    }

    fn masked_cfg() -> AugmentConfig {
        AugmentConfig {
            mask: Some(NormRect { x: 0.1, y: 0.1, width: 0.3, height: 0.2 }),
            ..AugmentConfig::default()
        }
    }

    #[test]
    fn apply_is_deterministic_per_kind() {
        let img = test_image();
        let cfg = masked_cfg();
        for kind in AugmentationKind::ALL {
            let a = apply(&img, kind, 99, &cfg).unwrap();
            let b = apply(&img, kind, 99, &cfg).unwrap();
            assert_eq!(a, b, "kind {kind:?} not deterministic");
        }
    }

    #[test]
    fn bright_adds_sixty_with_clamping() {
        let img = test_image();
        let out = apply(&img, AugmentationKind::Bright, 1, &masked_cfg()).unwrap();
        for (p, q) in img.pixels().zip(out.pixels()) {
            for (a, b) in p.0.iter().zip(q.0) {
                assert_eq!(i32::from(b), (i32::from(*a) + 60).min(255));
            }
        }
    }

    #[test]
    fn dim_inverts_bright_in_the_unclamped_region() {
        let img = test_image();
        let cfg = masked_cfg();
        let bright = apply(&img, AugmentationKind::Bright, 1, &cfg).unwrap();
        let back = apply(&bright, AugmentationKind::Dim, 1, &cfg).unwrap();
        for (p, q) in img.pixels().zip(back.pixels()) {
            for (a, b) in p.0.iter().zip(q.0) {
                if (60..=195).contains(a) {
                    assert_eq!(*a, b);
                }
            }
        }
    }

    #[test]
    fn grayscale_commutes_with_bright_where_unclamped() {
        let img = RgbImage::from_fn(32, 32, |x, y| {
            // Channels capped at 195 so Bright never saturates.
            image::Rgb([
                (x * 6 % 196) as u8,
                (y * 7 % 196) as u8,
                ((x + 2 * y) % 196) as u8,
            ])
        });
        let cfg = masked_cfg();
        let a = apply(
            &apply(&img, AugmentationKind::Bright, 1, &cfg).unwrap(),
            AugmentationKind::Grayscale,
            1,
            &cfg,
        )
        .unwrap();
        let b = apply(
            &apply(&img, AugmentationKind::Grayscale, 1, &cfg).unwrap(),
            AugmentationKind::Bright,
            1,
            &cfg,
        )
        .unwrap();
        for (p, q) in a.pixels().zip(b.pixels()) {
            for (x, y) in p.0.iter().zip(q.0) {
                assert!((i32::from(*x) - i32::from(y)).abs() <= 1);
            }
        }
    }

    #[test]
    fn rotation_angle_stays_in_bounds() {
        for seed in 0..500u64 {
            let angle = rotation_angle_decideg(seed, 300);
            assert!((-300..=300).contains(&angle), "seed {seed} angle {angle}");
        }
    }

    #[test]
    fn suite_produces_eleven_reproducible_variants() {
        let img = test_image();
        let cfg = masked_cfg();
        let first = suite(&img, "img-1", 7, &cfg).unwrap();
        let second = suite(&img, "img-1", 7, &cfg).unwrap();
        assert_eq!(first.len(), 11);
        for (a, b) in first.iter().zip(&second) {
            assert_eq!(a.kind, b.kind);
            assert_eq!(a.pixels, b.pixels, "kind {:?}", a.kind);
            // Each variant reproduces independently from its own seed.
            let solo = apply(&img, a.kind, a.seed, &cfg).unwrap();
            assert_eq!(solo, a.pixels);
        }
    }

    #[test]
    fn suite_without_mask_is_rejected() {
        let img = test_image();
        assert!(matches!(
            suite(&img, "x", 1, &AugmentConfig { mask: None, ..AugmentConfig::default() }),
            Err(AugmentError::MissingMask)
        ));
    }

    #[test]
    fn occluded_without_mask_is_the_only_failing_kind() {
        let img = test_image();
        let cfg = AugmentConfig { mask: None, ..AugmentConfig::default() };
        for kind in AugmentationKind::ALL {
            let res = apply(&img, kind, 3, &cfg);
            if kind == AugmentationKind::Occluded {
                assert!(matches!(res, Err(AugmentError::MissingMask)));
            } else {
                assert!(res.is_ok(), "kind {kind:?} failed");
            }
        }
    }

    #[test]
    fn png_round_trip_is_exact() {
        let img = test_image();
        let bytes = encode_png(&img);
        let back = decode_image(&bytes).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(matches!(
            decode_image(b"definitely not an image"),
            Err(AugmentError::UnsupportedFormat(_))
        ));
    }
}
