//! The MNIST IDX container: big-endian header, then raw bytes.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{DataError, Dataset, Sample};
use crate::fontrender::GlyphClass;
use crate::raster::{Raster, PIXELS, SIDE};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Conventional file names for the two splits.
pub struct IdxNames;

impl IdxNames {
    pub const TRAIN_IMAGES: &'static str = "train-images-idx3-ubyte";
    pub const TRAIN_LABELS: &'static str = "train-labels-idx1-ubyte";
    pub const TEST_IMAGES: &'static str = "t10k-images-idx3-ubyte";
    pub const TEST_LABELS: &'static str = "t10k-labels-idx1-ubyte";
}

pub fn encode_images(samples: &[Sample]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + samples.len() * PIXELS);
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(samples.len() as u32).to_be_bytes());
    out.extend_from_slice(&(SIDE as u32).to_be_bytes());
    out.extend_from_slice(&(SIDE as u32).to_be_bytes());
    for s in samples {
        out.extend_from_slice(s.image.as_bytes());
    }
    out
}

pub fn encode_labels(samples: &[Sample]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + samples.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(samples.len() as u32).to_be_bytes());
    out.extend(samples.iter().map(|s| s.label));
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let file = File::create(path).map_err(DataError::io(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).map_err(DataError::io(path))?;
    w.flush().map_err(DataError::io(path))
}

/// Writes an images/labels IDX pair.
pub fn write_idx(ds: &Dataset, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<(), DataError> {
    if ds.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    write_file(images_path.as_ref(), &encode_images(&ds.samples))?;
    write_file(labels_path.as_ref(), &encode_labels(&ds.samples))
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| DataError::TruncatedFile {
            path: self.path.to_path_buf(),
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<(), DataError> {
        let found = self.u32()?;
        if found != expected {
            return Err(DataError::BadMagic {
                path: self.path.to_path_buf(),
                expected,
                found,
            });
        }
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(DataError::io(path))?;
    Ok(buf)
}

/// Decodes an images file into rasters.
pub fn decode_images(path: &Path, bytes: &[u8]) -> Result<Vec<Raster>, DataError> {
    let mut c = Cursor { path, bytes, pos: 0 };
    c.magic(IMAGES_MAGIC)?;
    let count = c.u32()? as usize;
    let rows = c.u32()? as usize;
    let cols = c.u32()? as usize;
    if rows != SIDE || cols != SIDE {
        return Err(DataError::BadDimensions { rows, cols });
    }
    let body = c.take(count.checked_mul(PIXELS).ok_or(DataError::TruncatedFile {
        path: path.to_path_buf(),
    })?)?;
    Ok(body
        .chunks_exact(PIXELS)
        .map(|px| Raster::from_slice(px).expect("exact chunk"))
        .collect())
}

pub fn decode_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>, DataError> {
    let mut c = Cursor { path, bytes, pos: 0 };
    c.magic(LABELS_MAGIC)?;
    let count = c.u32()? as usize;
    Ok(c.take(count)?.to_vec())
}

/// Reads an images/labels IDX pair into a dataset over the 13 classes.
pub fn read_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = decode_images(ip, &read_file(ip)?)?;
    let labels = decode_labels(lp, &read_file(lp)?)?;
    if images.len() != labels.len() {
        return Err(DataError::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    let samples = images
        .into_iter()
        .zip(labels)
        .map(|(image, label)| Sample {
            image,
            label,
            provenance: None,
        })
        .collect();
    Dataset::new(samples, GlyphClass::all())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(label: u8, fill: u8) -> Sample {
        Sample {
            image: Raster::filled(fill),
            label,
            provenance: None,
        }
    }

    #[test]
    fn header_bytes() {
        let imgs = encode_images(&[sample(0, 0)]);
        assert_eq!(imgs.len(), 16 + 784);
        assert_eq!(
            &imgs[..16],
            &[0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 0x1C, 0, 0, 0, 0x1C]
        );
        let labels = encode_labels(&[sample(0, 0), sample(5, 1), sample(12, 2)]);
        assert_eq!(labels, vec![0, 0, 8, 1, 0, 0, 0, 3, 0, 5, 12]);
    }

    #[test]
    fn decode_errors() {
        let p = Path::new("x");
        let labels = encode_labels(&[sample(1, 0)]);
        assert!(matches!(
            decode_images(p, &labels),
            Err(DataError::BadMagic { found: 0x801, .. })
        ));
        let mut imgs = encode_images(&[sample(0, 9), sample(1, 9)]);
        imgs.pop();
        assert!(matches!(decode_images(p, &imgs), Err(DataError::TruncatedFile { .. })));
        let mut odd = encode_images(&[sample(0, 9)]);
        odd[11] = 27;
        assert!(matches!(decode_images(p, &odd), Err(DataError::BadDimensions { rows: 27, .. })));
    }
}
