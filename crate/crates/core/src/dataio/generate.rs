//! render → transform → filter, assembled in index order.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, FontRecord, Manifest, Provenance, Sample, SplitParams};
use crate::augment::{
    assign_transforms, is_overflow, AugmentPolicy, TransformKind, DEFAULT_BORDER_WIDTH, DEFAULT_INK_THRESHOLD,
};
use crate::fontrender::{
    default_class_scales, glyph_coverage, load_font, render_glyph, FontEntry, GlyphClass, DEFAULT_INK_HEIGHT,
};
use crate::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverflowParams {
    pub border_width: usize,
    pub ink_threshold: u8,
}

impl Default for OverflowParams {
    fn default() -> Self {
        Self {
            border_width: DEFAULT_BORDER_WIDTH,
            ink_threshold: DEFAULT_INK_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateParams {
    pub n_total: usize,
    pub target_ink_height: u32,
    /// Rendering multiplier per class index.
    pub class_scales: Vec<f64>,
    pub overflow: OverflowParams,
    pub policy: AugmentPolicy,
}

impl Default for GenerateParams {
    fn default() -> Self {
        Self {
            n_total: 60_000,
            target_ink_height: DEFAULT_INK_HEIGHT,
            class_scales: default_class_scales(),
            overflow: OverflowParams::default(),
            policy: AugmentPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub requested: usize,
    pub retained: usize,
    pub retained_fraction: f64,
    /// Per class index, before and after the overflow filter.
    pub per_class_drawn: Vec<usize>,
    pub per_class_retained: Vec<usize>,
    /// Retained samples per font id.
    pub per_font_retained: BTreeMap<String, usize>,
    /// Transform assignments per kind, before and after the overflow filter.
    pub per_kind_drawn: BTreeMap<String, usize>,
    pub per_kind_retained: BTreeMap<String, usize>,
    /// Fonts skipped for some classes, with the class names they lack.
    pub missing_coverage: BTreeMap<String, Vec<String>>,
}

fn kind_name(kind: TransformKind) -> &'static str {
    match kind {
        TransformKind::Clean => "clean",
        TransformKind::Rotate => "rotate",
        TransformKind::RotateTranslate => "rotate_translate",
    }
}

/// Generates `params.n_total` candidates round-robin over classes (and, per
/// class, over the fonts covering it), assigns transforms, and drops every
/// transformed raster that touches the border.
pub fn generate_dataset(
    fonts: &[FontEntry],
    classes: &[GlyphClass],
    params: &GenerateParams,
) -> Result<(Dataset, GenerationSummary), DataError> {
    params.policy.validate()?;
    if params.n_total < classes.len() {
        return Err(DataError::TooFewSamples {
            min: classes.len(),
            got: params.n_total,
        });
    }
    if params.class_scales.len() < classes.iter().map(|c| c.index as usize + 1).max().unwrap_or(0) {
        return Err(DataError::Manifest(format!(
            "{} class scales for {} classes",
            params.class_scales.len(),
            classes.len()
        )));
    }

    let coverage: Vec<Vec<bool>> = fonts.iter().map(|f| glyph_coverage(f, classes)).collect();
    if !coverage.iter().flatten().any(|&c| c) {
        return Err(DataError::NoUsableFonts);
    }
    let mut missing_coverage = BTreeMap::new();
    for (font, cov) in fonts.iter().zip(&coverage) {
        let missing: Vec<String> = classes
            .iter()
            .zip(cov)
            .filter(|(_, &c)| !c)
            .map(|(g, _)| g.name.to_string())
            .collect();
        if !missing.is_empty() {
            missing_coverage.insert(font.id.clone(), missing);
        }
    }
    let covering: Vec<Vec<usize>> = (0..classes.len())
        .map(|k| (0..fonts.len()).filter(|&f| coverage[f][k]).collect())
        .collect();
    if let Some(k) = covering.iter().position(Vec::is_empty) {
        return Err(DataError::UncoveredClass(classes[k]));
    }

    let n_classes = classes.len();
    let pick = |i: usize| -> (usize, usize) {
        let k = i % n_classes;
        let fonts_for_class = &covering[k];
        (k, fonts_for_class[(i / n_classes) % fonts_for_class.len()])
    };

    // Every (class, font) pair used is rendered once.
    let mut pairs: Vec<(usize, usize)> = (0..params.n_total.min(n_classes * fonts.len().max(1)))
        .map(pick)
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    let rendered: Vec<Result<Raster, DataError>> = pairs
        .par_iter()
        .map(|&(k, f)| {
            let class = &classes[k];
            render_glyph(
                &fonts[f],
                class,
                params.target_ink_height,
                params.class_scales[class.index as usize],
            )
            .map_err(DataError::from)
        })
        .collect();
    let mut base: BTreeMap<(usize, usize), Raster> = BTreeMap::new();
    for (pair, raster) in pairs.into_iter().zip(rendered) {
        base.insert(pair, raster?);
    }

    let transforms = assign_transforms(params.n_total, &params.policy);
    let overflow = params.overflow;
    let candidates: Vec<(usize, Option<Sample>)> = transforms
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let (k, f) = pick(i);
            let image = t.apply(&base[&(k, f)]);
            if is_overflow(&image, overflow.border_width, overflow.ink_threshold) {
                return (k, None);
            }
            let sample = Sample {
                image,
                label: classes[k].index,
                provenance: Some(Provenance {
                    font_id: fonts[f].id.clone(),
                    transform: *t,
                }),
            };
            (k, Some(sample))
        })
        .collect();

    let mut per_class_drawn = vec![0; n_classes];
    let mut per_class_retained = vec![0; n_classes];
    let mut per_font_retained: BTreeMap<String, usize> = fonts.iter().map(|f| (f.id.clone(), 0)).collect();
    let mut per_kind_drawn: BTreeMap<String, usize> = BTreeMap::new();
    for t in &transforms {
        *per_kind_drawn.entry(kind_name(t.kind).to_string()).or_default() += 1;
    }
    let mut per_kind_retained: BTreeMap<String, usize> = BTreeMap::new();
    let mut samples = Vec::with_capacity(params.n_total);
    for (k, sample) in candidates {
        per_class_drawn[k] += 1;
        if let Some(s) = sample {
            per_class_retained[k] += 1;
            let prov = s.provenance.as_ref().expect("generated");
            *per_font_retained.entry(prov.font_id.clone()).or_default() += 1;
            *per_kind_retained.entry(kind_name(prov.transform.kind).to_string()).or_default() += 1;
            samples.push(s);
        }
    }
    // Labels are class indices, so the label space is the full class table.
    let label_space = GlyphClass::all()
        .into_iter()
        .take(classes.iter().map(|c| c.index as usize + 1).max().unwrap_or(0))
        .collect();
    let summary = GenerationSummary {
        requested: params.n_total,
        retained: samples.len(),
        retained_fraction: samples.len() as f64 / params.n_total as f64,
        per_class_drawn,
        per_class_retained,
        per_font_retained,
        per_kind_drawn,
        per_kind_retained,
        missing_coverage,
    };
    Ok((Dataset::new(samples, label_space)?, summary))
}

/// Builds the manifest describing a generation run.
pub fn manifest_for(fonts_dir: &Path, fonts: &[FontEntry], params: &GenerateParams, split: SplitParams) -> Manifest {
    Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        fonts_dir: fonts_dir.display().to_string(),
        generation: params.clone(),
        split,
        fonts: fonts
            .iter()
            .map(|f| FontRecord {
                id: f.id.clone(),
                file: f.path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                nominal_scale: f.nominal_scale,
            })
            .collect(),
    }
}

/// Regenerates the (unsplit) dataset a manifest describes. `fonts_dir`
/// overrides the directory recorded in the manifest.
pub fn generate_from_manifest(
    manifest: &Manifest,
    fonts_dir: Option<&Path>,
) -> Result<(Dataset, GenerationSummary), DataError> {
    let dir = fonts_dir.unwrap_or_else(|| Path::new(&manifest.fonts_dir));
    let fonts = manifest
        .fonts
        .iter()
        .map(|rec| {
            let mut f = load_font(dir.join(&rec.file))?.with_nominal_scale(rec.nominal_scale)?;
            f.id = rec.id.clone();
            Ok(f)
        })
        .collect::<Result<Vec<_>, DataError>>()?;
    let (mut ds, summary) = generate_dataset(&fonts, &GlyphClass::all(), &manifest.generation)?;
    ds.manifest = Some(manifest.clone());
    Ok((ds, summary))
}
