//! Bundled monochrome glyph sheet and text/mark stamping.
//!
//! Rendering from fixed bitmaps keeps overlay augmentations byte-exact on
//! every platform; no system font is ever loaded.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use image::RgbImage;

#[derive(Debug, Clone)]
pub struct Glyph {
    pub width: u32,
    pub height: u32,
    rows: Vec<Vec<bool>>,
}

impl Glyph {
    pub fn is_on(&self, x: u32, y: u32) -> bool {
        self.rows
            .get(y as usize)
            .and_then(|row| row.get(x as usize))
            .copied()
            .unwrap_or(false)
    }
}

#[derive(Debug, Clone)]
pub struct GlyphSheet {
    glyphs: BTreeMap<String, Glyph>,
}

impl GlyphSheet {
    pub fn parse(text: &str) -> GlyphSheet {
        let mut glyphs = BTreeMap::new();
        let mut name: Option<String> = None;
        let mut rows: Vec<Vec<bool>> = Vec::new();
        let mut flush = |name: &mut Option<String>, rows: &mut Vec<Vec<bool>>| {
            if let Some(n) = name.take() {
                if !rows.is_empty() {
                    let width = rows.iter().map(Vec::len).max().unwrap_or(0) as u32;
                    let height = rows.len() as u32;
                    glyphs.insert(
                        n,
                        Glyph {
                            width,
                            height,
                            rows: std::mem::take(rows),
                        },
                    );
                }
            }
            rows.clear();
        };
        for line in text.lines() {
            let line = line.trim_end();
            if line.starts_with('#') && name.is_none() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("glyph ") {
                flush(&mut name, &mut rows);
                name = Some(rest.trim().to_string());
            } else if line.is_empty() {
                flush(&mut name, &mut rows);
            } else if name.is_some() {
                rows.push(line.chars().map(|c| c == '#').collect());
            }
        }
        flush(&mut name, &mut rows);
        GlyphSheet { glyphs }
    }

    /// The sheet bundled with the crate.
    pub fn bundled() -> &'static GlyphSheet {
        static SHEET: OnceLock<GlyphSheet> = OnceLock::new();
        SHEET.get_or_init(|| GlyphSheet::parse(include_str!("../../data/glyphs.txt")))
    }

    pub fn get(&self, name: &str) -> Option<&Glyph> {
        self.glyphs.get(name)
    }

    pub fn for_char(&self, c: char) -> Option<&Glyph> {
        let upper = c.to_ascii_uppercase();
        self.glyphs.get(&upper.to_string())
    }

    /// Emoji marks, in sheet order.
    pub fn emoji(&self) -> Vec<&Glyph> {
        self.glyphs
            .iter()
            .filter(|(name, _)| name.starts_with("emoji:"))
            .map(|(_, g)| g)
            .collect()
    }
}

/// Draws one glyph at pixel origin `(ox, oy)` with integer cell `scale`,
/// clipping at the image bounds.
pub fn stamp_glyph(img: &mut RgbImage, glyph: &Glyph, ox: i64, oy: i64, scale: u32, color: [u8; 3]) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    for gy in 0..glyph.height {
        for gx in 0..glyph.width {
            if !glyph.is_on(gx, gy) {
                continue;
            }
            for sy in 0..scale {
                for sx in 0..scale {
                    let px = ox + i64::from(gx * scale + sx);
                    let py = oy + i64::from(gy * scale + sy);
                    if (0..w).contains(&px) && (0..h).contains(&py) {
                        img.put_pixel(px as u32, py as u32, image::Rgb(color));
                    }
                }
            }
        }
    }
}

/// Pixel width of `text` at the given scale (monospace advance of one
/// blank column between cells).
pub fn text_width(sheet: &GlyphSheet, text: &str, scale: u32) -> u32 {
    let cell = cell_width(sheet);
    (text.chars().count() as u32) * (cell + 1) * scale
}

pub fn text_height(sheet: &GlyphSheet, scale: u32) -> u32 {
    cell_height(sheet) * scale
}

fn cell_width(sheet: &GlyphSheet) -> u32 {
    sheet.for_char('A').map_or(5, |g| g.width)
}

fn cell_height(sheet: &GlyphSheet) -> u32 {
    sheet.for_char('A').map_or(7, |g| g.height)
}

/// Stamps a line of text; characters missing from the sheet advance the
/// cursor without drawing.
pub fn stamp_text(
    img: &mut RgbImage,
    sheet: &GlyphSheet,
    text: &str,
    ox: i64,
    oy: i64,
    scale: u32,
    color: [u8; 3],
) {
    let advance = i64::from((cell_width(sheet) + 1) * scale);
    let mut x = ox;
    for c in text.chars() {
        if let Some(glyph) = sheet.for_char(c) {
            stamp_glyph(img, glyph, x, oy, scale, color);
        }
        x += advance;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_sheet_covers_alphabet_digits_and_emoji() {
        let sheet = GlyphSheet::bundled();
        for c in ('A'..='Z').chain('0'..='9') {
            assert!(sheet.for_char(c).is_some(), "missing glyph for {c:?}");
        }
        assert!(sheet.emoji().len() >= 3);
    }

    #[test]
    fn stamping_clips_at_bounds() {
        let sheet = GlyphSheet::bundled();
        let mut img = RgbImage::from_pixel(10, 10, image::Rgb([0, 0, 0]));
        stamp_text(&mut img, sheet, "WWW", -3, -3, 2, [255, 255, 255]);
        // No panic and something was drawn.
        assert!(img.pixels().any(|p| p.0 == [255, 255, 255]));
    }
}
