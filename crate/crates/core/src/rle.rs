//! COCO-style uncompressed run-length encoding of binary masks.
//!
//! Pixels are visited in column-major order (`index = x * height + y`) and
//! the first run always counts zeros, so a mask starting with a set pixel
//! begins with a zero-length run.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum RleError {
    #[error("run lengths sum to {got}, expected {expected} for a {width}x{height} mask")]
    LengthMismatch {
        got: u64,
        expected: u64,
        width: u32,
        height: u32,
    },
}

/// Binary mask of `width x height` pixels, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    /// Mask with the pixel rectangle `[x0, x1) x [y0, y1)` set, clipped to the image.
    pub fn from_rect(width: u32, height: u32, x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        let mut m = Self::new(width, height);
        for y in y0.min(height)..y1.min(height) {
            for x in x0.min(width)..x1.min(width) {
                m.set(x, y, true);
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.bits[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let idx = (y * self.width + x) as usize;
        self.bits[idx] = value;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Set pixels with at least one 4-neighbour outside the mask or image.
    pub fn outline(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.get(x, y) {
                    continue;
                }
                let edge = x == 0
                    || y == 0
                    || x + 1 == self.width
                    || y + 1 == self.height
                    || !self.get(x - 1, y)
                    || !self.get(x + 1, y)
                    || !self.get(x, y - 1)
                    || !self.get(x, y + 1);
                if edge {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

/// RLE-encoded mask as it travels on the wire.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub width: u32,
    pub height: u32,
    pub counts: Vec<u32>,
}

impl RleMask {
    pub fn encode(mask: &BinaryMask) -> Self {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for x in 0..mask.width {
            for y in 0..mask.height {
                let bit = mask.get(x, y);
                if bit != current {
                    counts.push(run);
                    run = 0;
                    current = bit;
                }
                run += 1;
            }
        }
        counts.push(run);
        RleMask {
            width: mask.width,
            height: mask.height,
            counts,
        }
    }

    pub fn decode(&self) -> Result<BinaryMask, RleError> {
        let expected = self.width as u64 * self.height as u64;
        let got: u64 = self.counts.iter().map(|&c| c as u64).sum();
        if got != expected {
            return Err(RleError::LengthMismatch {
                got,
                expected,
                width: self.width,
                height: self.height,
            });
        }
        let mut mask = BinaryMask::new(self.width, self.height);
        let mut pos = 0u64;
        for (i, &run) in self.counts.iter().enumerate() {
            let value = i % 2 == 1;
            for p in pos..pos + run as u64 {
                if value {
                    let x = (p / self.height as u64) as u32;
                    let y = (p % self.height as u64) as u32;
                    mask.set(x, y, true);
                }
            }
            pos += run as u64;
        }
        Ok(mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn column_major_first_run_is_zeros() {
        // 2x2 mask, only (0,0) set: column-major order is (0,0),(0,1),(1,0),(1,1)
        let mut m = BinaryMask::new(2, 2);
        m.set(0, 0, true);
        assert_eq!(RleMask::encode(&m).counts, vec![0, 1, 3]);
        let mut m = BinaryMask::new(2, 2);
        m.set(1, 0, true);
        assert_eq!(RleMask::encode(&m).counts, vec![2, 1, 1]);
    }

    #[test]
    fn rectangle_counts() {
        // x in [10,20), y in [10,30) on 64x64: each of the 10 columns is 10 off, 20 on, 34 off
        let m = BinaryMask::from_rect(64, 64, 10, 10, 20, 30);
        let rle = RleMask::encode(&m);
        let mut expected = vec![10 * 64 + 10];
        for col in 0..10 {
            expected.push(20);
            expected.push(if col == 9 { 34 + 44 * 64 } else { 34 + 10 });
        }
        assert_eq!(rle.counts, expected);
        assert_eq!(rle.decode().unwrap(), m);
        assert_eq!(m.area(), 200);
    }

    #[test]
    fn bad_lengths_rejected() {
        let rle = RleMask {
            width: 4,
            height: 4,
            counts: vec![3, 2],
        };
        assert!(matches!(rle.decode(), Err(RleError::LengthMismatch { got: 5, expected: 16, .. })));
    }

    #[test]
    fn outline_of_rectangle_is_its_perimeter() {
        let m = BinaryMask::from_rect(16, 16, 2, 3, 8, 9);
        let outline = m.outline();
        assert_eq!(outline.len(), 2 * 6 + 2 * 4);
        assert!(outline.iter().all(|&(x, y)| x == 2 || x == 7 || y == 3 || y == 8));
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(w in 1u32..12, h in 1u32..12, seed in any::<u64>()) {
            let mut m = BinaryMask::new(w, h);
            let mut s = seed;
            for y in 0..h {
                for x in 0..w {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    m.set(x, y, (s >> 33) & 1 == 1);
                }
            }
            prop_assert_eq!(RleMask::encode(&m).decode().unwrap(), m);
        }
    }
}
