//! Samples and datasets, the IDX container, manifests, the stratified
//! split, handwritten-image normalization and end-to-end generation.

mod generate;
mod handwritten;
pub mod idx;
mod manifest;
mod split;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{PolicyError, TransformRecord};
use crate::fontrender::{FontError, GlyphClass, RenderError};
use crate::raster::Raster;

pub use generate::{generate_dataset, generate_from_manifest, manifest_for, GenerateParams, GenerationSummary, OverflowParams};
pub use handwritten::{load_gray, load_handwritten_dir, normalize_handwritten, GrayImage, LABELS_SIDECAR};
pub use idx::{read_idx, write_idx, IdxNames};
pub use manifest::{FontRecord, Manifest, SplitParams, MANIFEST_FILE};
pub use split::split;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad IDX magic {found:#010x} (expected {expected:#010x})")]
    BadMagic { path: PathBuf, expected: u32, found: u32 },
    #[error("image file has {images} items but label file has {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path} is truncated")]
    TruncatedFile { path: PathBuf },
    #[error("images are {rows}×{cols}, expected 28×28")]
    BadDimensions { rows: usize, cols: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("class {0} has no samples")]
    EmptyClass(GlyphClass),
    #[error("train fraction must lie strictly between 0 and 1 (got {0})")]
    BadFraction(f64),
    #[error("image is {height}×{width}; at least 28×28 is required")]
    TooSmall { height: usize, width: usize },
    #[error("cannot decode image {path}: {message}")]
    BadImage { path: PathBuf, message: String },
    #[error("no label for {0} (use a labels.txt sidecar or a class prefix in the file name)")]
    MissingLabel(String),
    #[error("no usable fonts: none covers any target glyph")]
    NoUsableFonts,
    #[error("no font covers {0}")]
    UncoveredClass(GlyphClass),
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("bad manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Font(#[from] FontError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> DataError {
        let path = path.into();
        move |source| DataError::Io { path, source }
    }
}

/// Where a generated sample came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub font_id: String,
    pub transform: TransformRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Raster,
    pub label: u8,
    pub provenance: Option<Provenance>,
}

/// Ordered samples, the label space they index into, and (for generated
/// data) the manifest that reproduces them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub classes: Vec<GlyphClass>,
    pub manifest: Option<Manifest>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, classes: Vec<GlyphClass>) -> Result<Self, DataError> {
        if let Some(s) = samples.iter().find(|s| s.label as usize >= classes.len()) {
            return Err(DataError::LabelOutOfRange {
                label: s.label as usize,
                classes: classes.len(),
            });
        }
        Ok(Self {
            samples,
            classes,
            manifest: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label as usize).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for s in &self.samples {
            counts[s.label as usize] += 1;
        }
        counts
    }
}
