use serde::{Deserialize, Serialize};

use crate::rle::RleMask;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum BoxError {
    #[error("box coordinates must be finite and within [0, 1], got {0:?}")]
    OutOfRange([f64; 4]),
    #[error("box corners are inverted: {0:?}")]
    Inverted([f64; 4]),
}

/// Axis-aligned box in normalized image coordinates, `[x1, y1, x2, y2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct NormBox([f64; 4]);

impl NormBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, BoxError> {
        let c = [x1, y1, x2, y2];
        if c.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(BoxError::OutOfRange(c));
        }
        if x1 > x2 || y1 > y2 {
            return Err(BoxError::Inverted(c));
        }
        Ok(NormBox(c))
    }

    pub fn coords(&self) -> [f64; 4] {
        self.0
    }

    /// Pixel rectangle `[x0, x1) x [y0, y1)` covered by the box.
    pub fn to_pixels(&self, width: u32, height: u32) -> PixelRect {
        let [x1, y1, x2, y2] = self.0;
        let sx = |v: f64| ((v * width as f64).round() as u32).min(width);
        let sy = |v: f64| ((v * height as f64).round() as u32).min(height);
        PixelRect {
            x0: sx(x1),
            y0: sy(y1),
            x1: sx(x2),
            y1: sy(y2),
        }
    }

    pub fn from_pixels(rect: PixelRect, width: u32, height: u32) -> Self {
        NormBox([
            rect.x0 as f64 / width as f64,
            rect.y0 as f64 / height as f64,
            rect.x1 as f64 / width as f64,
            rect.y1 as f64 / height as f64,
        ])
    }
}

impl TryFrom<[f64; 4]> for NormBox {
    type Error = BoxError;

    fn try_from(c: [f64; 4]) -> Result<Self, BoxError> {
        NormBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<NormBox> for [f64; 4] {
    fn from(b: NormBox) -> Self {
        b.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    pub fn width(&self) -> u32 {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> u32 {
        self.y1.saturating_sub(self.y0)
    }
}

/// One open-vocabulary detection; `label` is the prompt noun that matched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: NormBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<RleMask>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_conversion_round_trips_on_grid() {
        let b = NormBox::new(10.0 / 64.0, 10.0 / 64.0, 20.0 / 64.0, 30.0 / 64.0).unwrap();
        let r = b.to_pixels(64, 64);
        assert_eq!(r, PixelRect { x0: 10, y0: 10, x1: 20, y1: 30 });
        assert_eq!(NormBox::from_pixels(r, 64, 64), b);
    }

    #[test]
    fn validation() {
        assert!(NormBox::new(0.5, 0.1, 0.4, 0.2).is_err());
        assert!(NormBox::new(-0.1, 0.1, 0.4, 0.2).is_err());
        assert!(NormBox::new(0.3, 0.1, 0.3, 0.2).unwrap().to_pixels(10, 10).is_empty());
        let parsed: Result<NormBox, _> = serde_json::from_str("[0.9, 0.0, 0.1, 1.0]");
        assert!(parsed.is_err());
    }
}
