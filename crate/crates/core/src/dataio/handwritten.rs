//! Normalization of external (handwritten) images to MNIST-style rasters.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::{DataError, Dataset, Sample};
use crate::fontrender::GlyphClass;
use crate::raster::{Raster, SIDE};

/// Optional label list beside handwritten images: one `file label` per line.
pub const LABELS_SIDECAR: &str = "labels.txt";

/// An 8-bit grayscale image of any size, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel count");
        Self { width, height, pixels }
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }
}

/// Decodes a PNG or PGM file to grayscale.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage, DataError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(DataError::io(path))?;
    let img = image::load_from_memory(&bytes).map_err(|e| DataError::BadImage {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    Ok(GrayImage::new(w as usize, h as usize, gray.into_raw()))
}

/// Source-axis overlap of output cell `i` out of `SIDE`, as (index, weight) pairs.
fn overlaps(i: usize, len: usize) -> Vec<(usize, f64)> {
    let step = len as f64 / SIDE as f64;
    let (lo, hi) = (i as f64 * step, (i + 1) as f64 * step);
    let first = lo.floor() as usize;
    let last = (hi.ceil() as usize).min(len);
    (first..last)
        .map(|s| (s, (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0)))
        .filter(|&(_, w)| w > 0.0)
        .collect()
}

/// Optional inversion (so ink is bright), area-average downscale to 28×28,
/// then a min–max stretch to 0..=255 (skipped for constant images).
pub fn normalize_handwritten(img: &GrayImage, invert: bool) -> Result<Raster, DataError> {
    if img.height < SIDE || img.width < SIDE {
        return Err(DataError::TooSmall {
            height: img.height,
            width: img.width,
        });
    }
    let rows: Vec<_> = (0..SIDE).map(|r| overlaps(r, img.height)).collect();
    let cols: Vec<_> = (0..SIDE).map(|c| overlaps(c, img.width)).collect();
    let area = (img.height as f64 / SIDE as f64) * (img.width as f64 / SIDE as f64);

    let mut avg = vec![0.0f64; SIDE * SIDE];
    for (r, row_w) in rows.iter().enumerate() {
        for (c, col_w) in cols.iter().enumerate() {
            let mut acc = 0.0;
            for &(sy, wy) in row_w {
                for &(sx, wx) in col_w {
                    let v = img.get(sy, sx);
                    let v = if invert { 255 - v } else { v };
                    acc += wy * wx * v as f64;
                }
            }
            avg[r * SIDE + c] = acc / area;
        }
    }

    let (lo, hi) = avg.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    // Differences below one grey level count as constant.
    let stretch = hi - lo > 0.5;
    Ok(Raster::from_fn(|r, c| {
        let v = avg[r * SIDE + c];
        let v = if stretch { (v - lo) / (hi - lo) * 255.0 } else { v };
        v.round().clamp(0.0, 255.0) as u8
    }))
}

fn read_sidecar(dir: &Path) -> Result<HashMap<String, String>, DataError> {
    let path = dir.join(LABELS_SIDECAR);
    if !path.is_file() {
        return Ok(HashMap::new());
    }
    let text = std::fs::read_to_string(&path).map_err(DataError::io(&path))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| {
            let mut parts = l.split(|c: char| c == ',' || c.is_whitespace()).filter(|p| !p.is_empty());
            Some((parts.next()?.to_string(), parts.next()?.to_string()))
        })
        .collect())
}

fn label_from_name(stem: &str) -> Option<GlyphClass> {
    let head = stem.split(['_', '-', '.', ' ']).next().unwrap_or(stem);
    GlyphClass::parse(head).or_else(|| GlyphClass::parse(stem))
}

/// Loads every PNG/PGM in `dir` (sorted by name) as a labelled sample.
/// Labels come from `labels.txt` when it names the file, otherwise from the
/// file-name prefix before the first `_`/`-` (index, letter or transliteration).
pub fn load_handwritten_dir(dir: impl AsRef<Path>, invert: bool) -> Result<(Dataset, Vec<String>), DataError> {
    let dir = dir.as_ref();
    let sidecar = read_sidecar(dir)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(DataError::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();

    let mut samples = Vec::with_capacity(files.len());
    let mut names = Vec::with_capacity(files.len());
    for path in files {
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let class = match sidecar.get(&name).or_else(|| sidecar.get(&stem)) {
            Some(label) => GlyphClass::parse(label),
            None => label_from_name(&stem),
        }
        .ok_or_else(|| DataError::MissingLabel(name.clone()))?;
        let image = normalize_handwritten(&load_gray(&path)?, invert)?;
        samples.push(Sample {
            image,
            label: class.index,
            provenance: None,
        });
        names.push(name);
    }
    if samples.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    Ok((Dataset::new(samples, GlyphClass::all())?, names))
}
