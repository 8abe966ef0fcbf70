//! The 28×28 grayscale image unit shared by every stage of the pipeline.

use std::fmt;

/// Side length of every raster, in pixels.
pub const SIDE: usize = 28;
/// Number of pixels in a raster.
pub const PIXELS: usize = SIDE * SIDE;
/// Geometric centre of the canvas in pixel-index coordinates.
pub const CENTER: f64 = (SIDE as f64 - 1.0) / 2.0;

/// A 28×28 grid of 8-bit intensities, ink-on-black (0 = background, 255 = full ink).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Raster {
    pixels: Box<[u8; PIXELS]>,
}

/// Inclusive bounding box of pixels at or above some ink threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InkBox {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl InkBox {
    pub fn height(&self) -> usize {
        self.bottom - self.top + 1
    }

    pub fn width(&self) -> usize {
        self.right - self.left + 1
    }

    pub fn max_dim(&self) -> usize {
        self.height().max(self.width())
    }

    /// Centre as (row, col) in pixel-index coordinates.
    pub fn center(&self) -> (f64, f64) {
        (
            (self.top + self.bottom) as f64 / 2.0,
            (self.left + self.right) as f64 / 2.0,
        )
    }
}

impl Raster {
    pub fn blank() -> Self {
        Self {
            pixels: Box::new([0; PIXELS]),
        }
    }

    pub fn filled(value: u8) -> Self {
        Self {
            pixels: Box::new([value; PIXELS]),
        }
    }

    /// Builds a raster from row-major bytes; `None` unless exactly 784 are given.
    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        let arr: [u8; PIXELS] = bytes.try_into().ok()?;
        Some(Self {
            pixels: Box::new(arr),
        })
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut r = Self::blank();
        for row in 0..SIDE {
            for col in 0..SIDE {
                r.pixels[row * SIDE + col] = f(row, col);
            }
        }
        r
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * SIDE + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.pixels[row * SIDE + col] = value;
    }

    /// Row-major pixel bytes.
    pub fn as_bytes(&self) -> &[u8] {
        &self.pixels[..]
    }

    pub fn ink_sum(&self) -> u64 {
        self.pixels.iter().map(|&p| p as u64).sum()
    }

    pub fn count_nonzero(&self) -> usize {
        self.pixels.iter().filter(|&&p| p > 0).count()
    }

    /// Tight box around pixels `>= threshold`; `None` when there are none.
    pub fn ink_box(&self, threshold: u8) -> Option<InkBox> {
        let threshold = threshold.max(1);
        let mut bbox: Option<InkBox> = None;
        for row in 0..SIDE {
            for col in 0..SIDE {
                if self.get(row, col) < threshold {
                    continue;
                }
                bbox = Some(match bbox {
                    None => InkBox {
                        top: row,
                        left: col,
                        bottom: row,
                        right: col,
                    },
                    Some(b) => InkBox {
                        top: b.top.min(row),
                        left: b.left.min(col),
                        bottom: b.bottom.max(row),
                        right: b.right.max(col),
                    },
                });
            }
        }
        bbox
    }

    /// ASCII preview, one line per row.
    pub fn to_ascii(&self) -> String {
        const RAMP: &[u8] = b" .:-=+*#%@";
        let mut out = String::with_capacity(SIDE * (SIDE + 1));
        for row in 0..SIDE {
            for col in 0..SIDE {
                let idx = self.get(row, col) as usize * (RAMP.len() - 1) / 255;
                out.push(RAMP[idx] as char);
            }
            out.push('\n');
        }
        out
    }
}

impl Default for Raster {
    fn default() -> Self {
        Self::blank()
    }
}

impl fmt::Debug for Raster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Raster(ink_sum={})\n{}", self.ink_sum(), self.to_ascii())
    }
}
