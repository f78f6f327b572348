//! Annotated representative images: redactions are pixelated first, then
//! mask outlines, boxes and labels are drawn in the cluster color. Strokes
//! never touch redacted pixels, so a redacted region ends up holding only
//! constant blocks.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Rgb as Px, RgbImage};

use crate::detection::{Detection, NormBox, PixelRect};
use crate::palette::Rgb;

/// Edge length of a pixelation block.
pub const PIXEL_BLOCK: u32 = 16;

#[derive(Debug, thiserror::Error)]
pub enum OverlayError {
    #[error("cannot decode {path}: {message}")]
    Decode { path: String, message: String },
    #[error("cannot encode overlay: {0}")]
    Encode(String),
}

/// Replaces each `PIXEL_BLOCK`-square block of `rect` (aligned to the
/// rect's origin, clipped at its far edges) by the block's mean color.
pub fn pixelate(img: &mut RgbImage, rect: PixelRect) {
    let (w, h) = img.dimensions();
    let rect = PixelRect {
        x0: rect.x0.min(w),
        y0: rect.y0.min(h),
        x1: rect.x1.min(w),
        y1: rect.y1.min(h),
    };
    let mut by = rect.y0;
    while by < rect.y1 {
        let ey = (by + PIXEL_BLOCK).min(rect.y1);
        let mut bx = rect.x0;
        while bx < rect.x1 {
            let ex = (bx + PIXEL_BLOCK).min(rect.x1);
            let mut sum = [0u64; 3];
            for y in by..ey {
                for x in bx..ex {
                    let p = img.get_pixel(x, y);
                    for c in 0..3 {
                        sum[c] += p[c] as u64;
                    }
                }
            }
            let count = ((ex - bx) * (ey - by)) as u64;
            let mean = Px([0, 1, 2].map(|c| ((sum[c] + count / 2) / count) as u8));
            for y in by..ey {
                for x in bx..ex {
                    img.put_pixel(x, y, mean);
                }
            }
            bx = ex;
        }
        by = ey;
    }
}

/// 3x5 glyphs, one row per entry, most significant of 3 bits on the left.
fn glyph(c: char) -> Option<[u8; 5]> {
    Some(match c {
        'a' => [2, 5, 7, 5, 5],
        'b' => [6, 5, 6, 5, 6],
        'c' => [3, 4, 4, 4, 3],
        'd' => [6, 5, 5, 5, 6],
        'e' => [7, 4, 6, 4, 7],
        'f' => [7, 4, 6, 4, 4],
        'g' => [3, 4, 5, 5, 3],
        'h' => [5, 5, 7, 5, 5],
        'i' => [7, 2, 2, 2, 7],
        'j' => [1, 1, 1, 5, 2],
        'k' => [5, 5, 6, 5, 5],
        'l' => [4, 4, 4, 4, 7],
        'm' => [5, 7, 7, 5, 5],
        'n' => [6, 5, 5, 5, 5],
        'o' => [2, 5, 5, 5, 2],
        'p' => [6, 5, 6, 4, 4],
        'q' => [2, 5, 5, 6, 3],
        'r' => [6, 5, 6, 5, 5],
        's' => [3, 4, 2, 1, 6],
        't' => [7, 2, 2, 2, 2],
        'u' => [5, 5, 5, 5, 7],
        'v' => [5, 5, 5, 5, 2],
        'w' => [5, 5, 7, 7, 5],
        'x' => [5, 5, 2, 5, 5],
        'y' => [5, 5, 2, 2, 2],
        'z' => [7, 1, 2, 4, 7],
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [6, 1, 2, 4, 7],
        '3' => [6, 1, 2, 1, 6],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 6, 1, 6],
        '6' => [3, 4, 7, 5, 7],
        '7' => [7, 1, 2, 2, 2],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 6],
        _ => return None,
    })
}

struct Canvas<'a> {
    img: &'a mut RgbImage,
    blocked: Vec<PixelRect>,
}

impl Canvas<'_> {
    fn put(&mut self, x: u32, y: u32, c: Px<u8>) {
        if x < self.img.width() && y < self.img.height() && !self.blocked.iter().any(|r| r.contains(x, y)) {
            self.img.put_pixel(x, y, c);
        }
    }

    fn rect_outline(&mut self, r: PixelRect, c: Px<u8>) {
        if r.is_empty() {
            return;
        }
        for x in r.x0..r.x1 {
            self.put(x, r.y0, c);
            self.put(x, r.y1 - 1, c);
        }
        for y in r.y0..r.y1 {
            self.put(r.x0, y, c);
            self.put(r.x1 - 1, y, c);
        }
    }

    /// Label tag in `bg` with white glyphs; top-left at `(x, y)`.
    fn label(&mut self, x: u32, y: u32, text: &str, bg: Px<u8>) {
        let glyphs: Vec<Option<[u8; 5]>> = text.chars().map(|c| glyph(c.to_ascii_lowercase())).collect();
        let width = 1 + 4 * glyphs.len() as u32;
        for dy in 0..7 {
            for dx in 0..width {
                self.put(x + dx, y + dy, bg);
            }
        }
        let white = Px([255, 255, 255]);
        for (i, g) in glyphs.iter().enumerate() {
            let Some(rows) = g else { continue };
            for (row, bits) in rows.iter().enumerate() {
                for col in 0..3 {
                    if bits & (4 >> col) != 0 {
                        self.put(x + 1 + 4 * i as u32 + col, y + 1 + row as u32, white);
                    }
                }
            }
        }
    }
}

/// Returns a new image; `image` is left untouched.
pub fn compose_overlay(image: &RgbImage, detections: &[Detection], redactions: &[NormBox], color: Rgb) -> RgbImage {
    let mut out = image.clone();
    let (w, h) = out.dimensions();
    let blocked: Vec<PixelRect> = redactions.iter().map(|b| b.to_pixels(w, h)).collect();
    for r in &blocked {
        pixelate(&mut out, *r);
    }
    let c = Px(color.to_array());
    let mut canvas = Canvas { img: &mut out, blocked };
    for d in detections {
        if let Some(mask) = d.mask.as_ref().and_then(|m| m.decode().ok()) {
            if mask.width() == w && mask.height() == h {
                for (x, y) in mask.outline() {
                    canvas.put(x, y, c);
                }
            }
        }
        let r = d.bbox.to_pixels(w, h);
        canvas.rect_outline(r, c);
        let ly = if r.y0 >= 7 { r.y0 - 7 } else { r.y0 };
        canvas.label(r.x0, ly, &d.label, c);
    }
    out
}

/// Decodes `path`, composes the overlay and returns PNG bytes.
pub fn compose_overlay_file(
    path: &Path,
    detections: &[Detection],
    redactions: &[NormBox],
    color: Rgb,
) -> Result<Vec<u8>, OverlayError> {
    let img = image::open(path)
        .map_err(|e| OverlayError::Decode {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
        .to_rgb8();
    let out = compose_overlay(&img, detections, redactions, color);
    let mut buf = Cursor::new(Vec::new());
    out.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| OverlayError::Encode(e.to_string()))?;
    Ok(buf.into_inner())
}
