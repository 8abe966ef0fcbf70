//! Font loading and glyph rasterization into centred 28×28 rasters.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use ab_glyph::{Font, FontArc, Glyph, GlyphId, OutlineCurve, OutlinedGlyph, Point, PxScaleFactor};
use serde::Deserialize;
use thiserror::Error;

pub use crate::raster::{InkBox, Raster, CENTER, PIXELS, SIDE};

/// Number of label classes.
pub const NUM_CLASSES: usize = 13;

/// Default fitted ink height, the MNIST 20-in-28 convention.
pub const DEFAULT_INK_HEIGHT: u32 = 20;

/// One of the 13 target letters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GlyphClass {
    pub index: u8,
    pub codepoint: char,
    pub name: &'static str,
}

/// The twelve vowels in alphabet order followed by aytham.
pub const CLASSES: [GlyphClass; NUM_CLASSES] = [
    GlyphClass { index: 0, codepoint: '\u{0B85}', name: "a" },
    GlyphClass { index: 1, codepoint: '\u{0B86}', name: "aa" },
    GlyphClass { index: 2, codepoint: '\u{0B87}', name: "i" },
    GlyphClass { index: 3, codepoint: '\u{0B88}', name: "ii" },
    GlyphClass { index: 4, codepoint: '\u{0B89}', name: "u" },
    GlyphClass { index: 5, codepoint: '\u{0B8A}', name: "uu" },
    GlyphClass { index: 6, codepoint: '\u{0B8E}', name: "e" },
    GlyphClass { index: 7, codepoint: '\u{0B8F}', name: "ee" },
    GlyphClass { index: 8, codepoint: '\u{0B90}', name: "ai" },
    GlyphClass { index: 9, codepoint: '\u{0B92}', name: "o" },
    GlyphClass { index: 10, codepoint: '\u{0B93}', name: "oo" },
    GlyphClass { index: 11, codepoint: '\u{0B94}', name: "au" },
    GlyphClass { index: 12, codepoint: '\u{0B83}', name: "aytham" },
];

impl GlyphClass {
    pub fn all() -> Vec<GlyphClass> {
        CLASSES.to_vec()
    }

    pub fn by_index(index: usize) -> Option<GlyphClass> {
        CLASSES.get(index).copied()
    }

    /// Resolves a label written as an index, the letter itself, or its transliteration.
    pub fn parse(s: &str) -> Option<GlyphClass> {
        let s = s.trim();
        if let Ok(i) = s.parse::<usize>() {
            return Self::by_index(i);
        }
        let mut chars = s.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if let Some(g) = CLASSES.iter().find(|g| g.codepoint == c) {
                return Some(*g);
            }
        }
        CLASSES
            .iter()
            .find(|g| g.name.eq_ignore_ascii_case(s))
            .copied()
    }

    /// Rendering size multiplier: the two letters most prone to spill are drawn smaller.
    pub fn default_scale(&self) -> f64 {
        match self.codepoint {
            '\u{0B94}' | '\u{0B83}' => 0.85,
            _ => 1.0,
        }
    }
}

impl fmt::Display for GlyphClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.codepoint, self.name)
    }
}

/// Per-class rendering multipliers, indexed by class.
pub fn default_class_scales() -> Vec<f64> {
    CLASSES.iter().map(GlyphClass::default_scale).collect()
}

#[derive(Debug, Error)]
pub enum FontError {
    #[error("cannot read font file {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not a parsable TrueType/OpenType font")]
    UnsupportedFormat { path: PathBuf },
    #[error("font '{id}': nominal scale {scale} outside (0, 1]")]
    InvalidScale { id: String, scale: f64 },
    #[error("duplicate font id '{0}'")]
    DuplicateId(String),
    #[error("bad font manifest {path}: {message}")]
    BadManifest { path: PathBuf, message: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("font '{font}' has no glyph for {class}")]
    NoGlyph { font: String, class: GlyphClass },
    #[error("font '{font}' rendered {class} with no ink")]
    DegenerateGlyph { font: String, class: GlyphClass },
    #[error("target ink height {0} outside 1..=28")]
    InvalidSize(u32),
}

/// A loaded scalable font.
#[derive(Clone)]
pub struct FontEntry {
    pub id: String,
    pub path: PathBuf,
    pub nominal_scale: f64,
    font: FontArc,
}

impl fmt::Debug for FontEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FontEntry")
            .field("id", &self.id)
            .field("path", &self.path)
            .field("nominal_scale", &self.nominal_scale)
            .finish()
    }
}

/// Loads a font file; its id is the file stem.
pub fn load_font(path: impl AsRef<Path>) -> Result<FontEntry, FontError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| FontError::UnreadableFile {
        path: path.to_path_buf(),
        source,
    })?;
    let font = FontArc::try_from_vec(bytes).map_err(|_| FontError::UnsupportedFormat {
        path: path.to_path_buf(),
    })?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(FontEntry {
        id,
        path: path.to_path_buf(),
        nominal_scale: 1.0,
        font,
    })
}

impl FontEntry {
    pub fn with_nominal_scale(mut self, scale: f64) -> Result<Self, FontError> {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(FontError::InvalidScale { id: self.id, scale });
        }
        self.nominal_scale = scale;
        Ok(self)
    }

    fn glyph_for(&self, c: char) -> Option<(GlyphId, Vec<OutlineCurve>)> {
        let id = self.font.glyph_id(c);
        if id.0 == 0 {
            return None;
        }
        let outline = self.font.outline(id)?;
        if outline.curves.is_empty() {
            return None;
        }
        Some((id, outline.curves))
    }
}

/// For each class, whether the font maps its codepoint to a non-empty glyph.
pub fn glyph_coverage(font: &FontEntry, classes: &[GlyphClass]) -> Vec<bool> {
    classes
        .iter()
        .map(|c| font.glyph_for(c.codepoint).is_some())
        .collect()
}

/// Exact extent of the outline curves in font units, y up, as (min_x, min_y, max_x, max_y).
fn curve_bounds(curves: &[OutlineCurve]) -> (f64, f64, f64, f64) {
    const STEPS: usize = 64;
    let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut add = |p: (f64, f64)| {
        b.0 = b.0.min(p.0);
        b.1 = b.1.min(p.1);
        b.2 = b.2.max(p.0);
        b.3 = b.3.max(p.1);
    };
    let pt = |p: &Point| (p.x as f64, p.y as f64);
    for curve in curves {
        match curve {
            OutlineCurve::Line(p0, p1) => {
                add(pt(p0));
                add(pt(p1));
            }
            OutlineCurve::Quad(p0, p1, p2) => {
                let (a, c, d) = (pt(p0), pt(p1), pt(p2));
                for i in 0..=STEPS {
                    let t = i as f64 / STEPS as f64;
                    let u = 1.0 - t;
                    add((
                        u * u * a.0 + 2.0 * u * t * c.0 + t * t * d.0,
                        u * u * a.1 + 2.0 * u * t * c.1 + t * t * d.1,
                    ));
                }
            }
            OutlineCurve::Cubic(p0, p1, p2, p3) => {
                let (a, c, d, e) = (pt(p0), pt(p1), pt(p2), pt(p3));
                for i in 0..=STEPS {
                    let t = i as f64 / STEPS as f64;
                    let u = 1.0 - t;
                    let (w0, w1, w2, w3) = (u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t);
                    add((
                        w0 * a.0 + w1 * c.0 + w2 * d.0 + w3 * e.0,
                        w0 * a.1 + w1 * c.1 + w2 * d.1 + w3 * e.1,
                    ));
                }
            }
        }
    }
    b
}

/// Fitted size in pixels of the glyph's larger ink dimension.
pub fn fitted_size(target_ink_height: u32, nominal_scale: f64, class_scale: f64) -> u32 {
    // The epsilon keeps products such as 20 × 0.85 from flooring to 16.
    ((target_ink_height as f64 * nominal_scale * class_scale) + 1e-9)
        .floor()
        .max(1.0) as u32
}

/// Rasterizes `class` so that its tight ink box has larger side
/// `fitted_size(target_ink_height, font.nominal_scale, class_scale)` and is
/// centred on the canvas. Ink past the canvas edge is clipped.
pub fn render_glyph(
    font: &FontEntry,
    class: &GlyphClass,
    target_ink_height: u32,
    class_scale: f64,
) -> Result<Raster, RenderError> {
    if !(1..=SIDE as u32).contains(&target_ink_height) {
        return Err(RenderError::InvalidSize(target_ink_height));
    }
    let (id, curves) = font.glyph_for(class.codepoint).ok_or_else(|| RenderError::NoGlyph {
        font: font.id.clone(),
        class: *class,
    })?;
    let (min_x, min_y, max_x, max_y) = curve_bounds(&curves);
    let extent = (max_x - min_x).max(max_y - min_y);
    if !(extent > 0.0) {
        return Err(RenderError::DegenerateGlyph {
            font: font.id.clone(),
            class: *class,
        });
    }
    let size = fitted_size(target_ink_height, font.nominal_scale, class_scale) as f64;
    let k = size / extent;
    // Canvas centre in continuous coordinates (pixel i spans [i, i + 1)).
    let mid = CENTER + 0.5;
    let position = ab_glyph::point(
        (mid - k * (min_x + max_x) / 2.0) as f32,
        (mid + k * (min_y + max_y) / 2.0) as f32,
    );
    let glyph = Glyph {
        id,
        scale: ab_glyph::PxScale::from(1.0),
        position,
    };
    let outline = ab_glyph::Outline {
        bounds: ab_glyph::Rect {
            min: ab_glyph::point(min_x as f32, max_y as f32),
            max: ab_glyph::point(max_x as f32, min_y as f32),
        },
        curves,
    };
    let factor = PxScaleFactor {
        horizontal: k as f32,
        vertical: k as f32,
    };
    let outlined = OutlinedGlyph::new(glyph, outline, factor);
    let origin = outlined.px_bounds().min;
    let (ox, oy) = (origin.x as i64, origin.y as i64);

    let mut raster = Raster::blank();
    outlined.draw(|x, y, coverage| {
        let col = ox + x as i64;
        let row = oy + y as i64;
        if (0..SIDE as i64).contains(&row) && (0..SIDE as i64).contains(&col) {
            let v = (coverage.clamp(0.0, 1.0) * 255.0).round() as u8;
            raster.set(row as usize, col as usize, v);
        }
    });
    if raster.count_nonzero() == 0 {
        return Err(RenderError::DegenerateGlyph {
            font: font.id.clone(),
            class: *class,
        });
    }
    Ok(raster)
}

/// Optional `fonts.toml` beside the font files.
#[derive(Debug, Default, Deserialize)]
struct RegistryManifest {
    #[serde(default)]
    nominal_scale: BTreeMap<String, f64>,
}

/// Name of the optional per-directory font manifest.
pub const REGISTRY_MANIFEST: &str = "fonts.toml";

/// The set of fonts available for generation, ordered by id.
#[derive(Debug, Clone, Default)]
pub struct FontRegistry {
    fonts: Vec<FontEntry>,
}

impl FontRegistry {
    pub fn new(mut fonts: Vec<FontEntry>) -> Result<Self, FontError> {
        fonts.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in fonts.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(FontError::DuplicateId(pair[0].id.clone()));
            }
        }
        Ok(Self { fonts })
    }

    /// Loads every `.ttf`/`.otf` directly inside `dir`, applying scale
    /// overrides from `fonts.toml` when present.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, FontError> {
        let dir = dir.as_ref();
        let entries = std::fs::read_dir(dir).map_err(|source| FontError::UnreadableFile {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut paths = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|source| FontError::UnreadableFile {
                path: dir.to_path_buf(),
                source,
            })?;
            let path = entry.path();
            let is_font = path
                .extension()
                .and_then(|e| e.to_str())
                .map(|e| matches!(e.to_ascii_lowercase().as_str(), "ttf" | "otf"))
                .unwrap_or(false);
            if is_font && path.is_file() {
                paths.push(path);
            }
        }
        paths.sort();

        let manifest_path = dir.join(REGISTRY_MANIFEST);
        let manifest = if manifest_path.is_file() {
            let text = std::fs::read_to_string(&manifest_path).map_err(|source| {
                FontError::UnreadableFile {
                    path: manifest_path.clone(),
                    source,
                }
            })?;
            toml::from_str::<RegistryManifest>(&text).map_err(|e| FontError::BadManifest {
                path: manifest_path.clone(),
                message: e.to_string(),
            })?
        } else {
            RegistryManifest::default()
        };

        let mut fonts = Vec::with_capacity(paths.len());
        for path in paths {
            let mut entry = load_font(&path)?;
            if let Some(&scale) = manifest.nominal_scale.get(&entry.id) {
                entry = entry.with_nominal_scale(scale)?;
            }
            fonts.push(entry);
        }
        Self::new(fonts)
    }

    pub fn fonts(&self) -> &[FontEntry] {
        &self.fonts
    }

    pub fn get(&self, id: &str) -> Option<&FontEntry> {
        self.fonts.iter().find(|f| f.id == id)
    }

    pub fn len(&self) -> usize {
        self.fonts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fonts.is_empty()
    }
}
