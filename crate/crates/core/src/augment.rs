//! Rotation/translation augmentation with bilinear resampling, and the
//! border-ink overflow filter.

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{Raster, CENTER, SIDE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub frac_rotate_only: f64,
    pub frac_rotate_translate: f64,
    pub max_angle_deg: f64,
    pub max_shift_px: i32,
    pub seed: u64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            frac_rotate_only: 0.35,
            frac_rotate_translate: 0.15,
            max_angle_deg: 15.0,
            max_shift_px: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("augmentation fractions must be non-negative and sum to at most 1 (got {0} + {1})")]
    BadFractions(f64, f64),
    #[error("max angle must be positive and finite (got {0})")]
    BadAngle(f64),
    #[error("max shift must be non-negative (got {0})")]
    BadShift(i32),
}

impl AugmentPolicy {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let (a, b) = (self.frac_rotate_only, self.frac_rotate_translate);
        if !(a >= 0.0 && b >= 0.0 && a + b <= 1.0) {
            return Err(PolicyError::BadFractions(a, b));
        }
        if !(self.max_angle_deg > 0.0 && self.max_angle_deg.is_finite()) {
            return Err(PolicyError::BadAngle(self.max_angle_deg));
        }
        if self.max_shift_px < 0 {
            return Err(PolicyError::BadShift(self.max_shift_px));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Clean,
    Rotate,
    RotateTranslate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub kind: TransformKind,
    pub angle_deg: f64,
    pub dx: i32,
    pub dy: i32,
}

impl TransformRecord {
    pub const CLEAN: TransformRecord = TransformRecord {
        kind: TransformKind::Clean,
        angle_deg: 0.0,
        dx: 0,
        dy: 0,
    };

    pub fn apply(&self, src: &Raster) -> Raster {
        match self.kind {
            TransformKind::Clean => src.clone(),
            _ => rotate_translate(src, self.angle_deg, self.dx, self.dy),
        }
    }
}

/// `floor(n × frac)`, tolerant of products that land a hair below an integer.
pub fn quota(n: usize, frac: f64) -> usize {
    ((n as f64 * frac) + 1e-9).floor() as usize
}

/// Exact-quota transform assignment: `quota(n, frac_rotate_only)` rotations,
/// `quota(n, frac_rotate_translate)` rotate+translate, the rest clean, placed
/// by a seeded shuffle. Parameters are drawn in index order afterwards.
pub fn assign_transforms(n: usize, policy: &AugmentPolicy) -> Vec<TransformRecord> {
    let n_rot = quota(n, policy.frac_rotate_only).min(n);
    let n_rt = quota(n, policy.frac_rotate_translate).min(n - n_rot);

    let mut kinds = Vec::with_capacity(n);
    kinds.extend(std::iter::repeat(TransformKind::Rotate).take(n_rot));
    kinds.extend(std::iter::repeat(TransformKind::RotateTranslate).take(n_rt));
    kinds.extend(std::iter::repeat(TransformKind::Clean).take(n - n_rot - n_rt));

    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    kinds.shuffle(&mut rng);

    let angle = Uniform::new_inclusive(-policy.max_angle_deg, policy.max_angle_deg);
    let shift = Uniform::new_inclusive(-policy.max_shift_px, policy.max_shift_px);
    kinds
        .into_iter()
        .map(|kind| match kind {
            TransformKind::Clean => TransformRecord::CLEAN,
            TransformKind::Rotate => TransformRecord {
                kind,
                angle_deg: angle.sample(&mut rng),
                dx: 0,
                dy: 0,
            },
            TransformKind::RotateTranslate => TransformRecord {
                kind,
                angle_deg: angle.sample(&mut rng),
                dx: shift.sample(&mut rng),
                dy: shift.sample(&mut rng),
            },
        })
        .collect()
}

/// Source location (row, col) feeding output pixel (row, col).
///
/// The forward map rotates about the canvas centre by `angle_deg`
/// (positive = counter-clockwise on screen) and then shifts by `(dx, dy)`
/// (columns, rows). This is its inverse.
#[inline]
pub fn source_location(row: f64, col: f64, angle_deg: f64, dx: f64, dy: f64) -> (f64, f64) {
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let x = col - dx - CENTER;
    let y = row - dy - CENTER;
    let sx = x * cos - y * sin;
    let sy = x * sin + y * cos;
    (sy + CENTER, sx + CENTER)
}

/// Bilinear sample at a continuous location; off-grid neighbours read as 0.
#[inline]
pub fn sample_bilinear(src: &Raster, row: f64, col: f64) -> f64 {
    let r0 = row.floor();
    let c0 = col.floor();
    let fr = row - r0;
    let fc = col - c0;
    let (r0, c0) = (r0 as i64, c0 as i64);
    let px = |r: i64, c: i64| -> f64 {
        if (0..SIDE as i64).contains(&r) && (0..SIDE as i64).contains(&c) {
            src.get(r as usize, c as usize) as f64
        } else {
            0.0
        }
    };
    let mut acc = 0.0;
    // Skipping zero-weight taps keeps integer-aligned samples exact.
    for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
        if wr == 0.0 {
            continue;
        }
        for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
            if wc == 0.0 {
                continue;
            }
            acc += wr * wc * px(r0 + dr, c0 + dc);
        }
    }
    acc
}

/// Rotates about the canvas centre then shifts, resampling bilinearly.
/// Values round half away from zero and clamp to 0..=255.
pub fn rotate_translate(src: &Raster, angle_deg: f64, dx: i32, dy: i32) -> Raster {
    Raster::from_fn(|row, col| {
        let (sr, sc) = source_location(row as f64, col as f64, angle_deg, dx as f64, dy as f64);
        sample_bilinear(src, sr, sc).round().clamp(0.0, 255.0) as u8
    })
}

/// Overflow test defaults.
pub const DEFAULT_BORDER_WIDTH: usize = 1;
pub const DEFAULT_INK_THRESHOLD: u8 = 32;

/// True iff some pixel within `border_width` of an edge is at least `ink_threshold`.
pub fn is_overflow(r: &Raster, border_width: usize, ink_threshold: u8) -> bool {
    let bw = border_width.max(1).min(SIDE);
    (0..SIDE).any(|row| {
        (0..SIDE).any(|col| {
            let on_border = row < bw || col < bw || row >= SIDE - bw || col >= SIDE - bw;
            on_border && r.get(row, col) >= ink_threshold
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_raster() -> impl Strategy<Value = Raster> {
        proptest::collection::vec(any::<u8>(), 784).prop_map(|v| Raster::from_slice(&v).unwrap())
    }

    #[test]
    fn policy_validation() {
        assert!(AugmentPolicy::default().validate().is_ok());
        let bad = AugmentPolicy {
            frac_rotate_only: 0.7,
            frac_rotate_translate: 0.4,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(PolicyError::BadFractions(..))));
        let bad = AugmentPolicy {
            max_angle_deg: 0.0,
            ..Default::default()
        };
        assert_eq!(bad.validate(), Err(PolicyError::BadAngle(0.0)));
        let bad = AugmentPolicy {
            max_shift_px: -1,
            ..Default::default()
        };
        assert_eq!(bad.validate(), Err(PolicyError::BadShift(-1)));
    }

    #[test]
    fn single_pixel_shift() {
        let mut src = Raster::blank();
        src.set(14, 14, 255);
        let out = rotate_translate(&src, 0.0, 3, 0);
        let mut expected = Raster::blank();
        expected.set(14, 17, 255);
        assert_eq!(out, expected);
    }

    #[test]
    fn shift_off_canvas_clips() {
        let mut src = Raster::blank();
        src.set(14, 26, 200);
        let out = rotate_translate(&src, 0.0, 5, 0);
        assert_eq!(out.count_nonzero(), 0);
    }

    #[test]
    fn center_block_survives_rotation() {
        let mut src = Raster::blank();
        for r in 12..16 {
            for c in 12..16 {
                src.set(r, c, 180);
            }
        }
        for angle in [-15.0, -7.3, 4.0, 15.0] {
            let out = rotate_translate(&src, angle, 0, 0);
            for r in 13..15 {
                for c in 13..15 {
                    assert_eq!(out.get(r, c), 180, "angle {angle}");
                }
            }
        }
    }

    #[test]
    fn center_is_a_fixed_point() {
        for angle in [-15.0, 3.0, 90.0, 15.0] {
            let (r, c) = source_location(CENTER, CENTER, angle, 0.0, 0.0);
            assert!((r - CENTER).abs() < 1e-12 && (c - CENTER).abs() < 1e-12);
        }
    }

    #[test]
    fn positive_angle_is_counter_clockwise() {
        // A pixel right of centre moves up under a 90° counter-clockwise turn.
        let mut src = Raster::blank();
        src.set(13, 20, 255);
        src.set(14, 20, 255);
        let out = rotate_translate(&src, 90.0, 0, 0);
        let b = out.ink_box(128).unwrap();
        assert!(b.bottom < 13, "{out:?}");
    }

    #[test]
    fn quotas_are_exact() {
        let t = assign_transforms(10_000, &AugmentPolicy::with_seed(7));
        let count = |k| t.iter().filter(|r| r.kind == k).count();
        assert_eq!(count(TransformKind::Rotate), 3_500);
        assert_eq!(count(TransformKind::RotateTranslate), 1_500);
        assert_eq!(count(TransformKind::Clean), 5_000);
        assert!(assign_transforms(0, &AugmentPolicy::default()).is_empty());
    }

    #[test]
    fn quota_saturates_at_full_fraction() {
        let p = AugmentPolicy {
            frac_rotate_only: 0.5,
            frac_rotate_translate: 0.5,
            ..Default::default()
        };
        let t = assign_transforms(7, &p);
        let count = |k| t.iter().filter(|r| r.kind == k).count();
        assert_eq!(count(TransformKind::Rotate), 3);
        assert_eq!(count(TransformKind::RotateTranslate), 3);
        assert_eq!(count(TransformKind::Clean), 1);
    }

    #[test]
    fn overflow_examples() {
        let mut r = Raster::blank();
        r.set(0, 13, 255);
        assert!(is_overflow(&r, 1, 32));

        let inner = Raster::from_fn(|row, col| {
            if (2..=25).contains(&row) && (2..=25).contains(&col) {
                255
            } else {
                0
            }
        });
        assert!(!is_overflow(&inner, 1, 32));
        // A wider border reaches the interior ink.
        assert!(is_overflow(&inner, 3, 32));

        let mut faint = Raster::blank();
        faint.set(27, 5, 31);
        assert!(!is_overflow(&faint, 1, 32));
        faint.set(27, 5, 32);
        assert!(is_overflow(&faint, 1, 32));
    }

    proptest! {
        #[test]
        fn identity_transform_is_exact(r in arb_raster()) {
            prop_assert_eq!(rotate_translate(&r, 0.0, 0, 0), r);
        }

        #[test]
        fn integer_shift_is_rigid(r in arb_raster(), dx in -5i32..=5, dy in -5i32..=5) {
            let out = rotate_translate(&r, 0.0, dx, dy);
            for row in 0..SIDE as i32 {
                for col in 0..SIDE as i32 {
                    let (sr, sc) = (row - dy, col - dx);
                    let expected = if (0..SIDE as i32).contains(&sr) && (0..SIDE as i32).contains(&sc) {
                        r.get(sr as usize, sc as usize)
                    } else {
                        0
                    };
                    prop_assert_eq!(out.get(row as usize, col as usize), expected);
                }
            }
        }

        #[test]
        fn filter_soundness(r in arb_raster(), bw in 1usize..4, thr in 0u8..=255) {
            if !is_overflow(&r, bw, thr) {
                for row in 0..SIDE {
                    for col in 0..SIDE {
                        if row < bw || col < bw || row >= SIDE - bw || col >= SIDE - bw {
                            prop_assert!(r.get(row, col) < thr);
                        }
                    }
                }
            }
        }

        #[test]
        fn assignments_respect_policy(n in 0usize..400, seed in any::<u64>()) {
            let p = AugmentPolicy::with_seed(seed);
            let t = assign_transforms(n, &p);
            prop_assert_eq!(t.len(), n);
            prop_assert_eq!(&t, &assign_transforms(n, &p));
            for rec in &t {
                prop_assert!(rec.angle_deg.abs() <= 15.0);
                prop_assert!(rec.dx.abs() <= 5 && rec.dy.abs() <= 5);
                match rec.kind {
                    TransformKind::Clean => prop_assert_eq!(*rec, TransformRecord::CLEAN),
                    TransformKind::Rotate => prop_assert!(rec.dx == 0 && rec.dy == 0),
                    TransformKind::RotateTranslate => {}
                }
            }
        }
    }
}
