//! Synthetic image pairs with exact ground truth, for desk-scale
//! verification of the matching pipeline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::ValidityMask;
use crate::error::{PgmError, Result};
use crate::imgproc::RasterImage;
use crate::interp::FlowField;

/// Uniform noise image with values in `[0, 255]`.
pub fn noise_image(width: usize, height: usize, channels: usize, seed: u64) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f32> = (0..width * height * channels)
        .map(|_| rng.gen_range(0.0f32..255.0))
        .collect();
    RasterImage::from_data(width, height, channels, data).expect("valid shape")
}

/// Noise smoothed by a 3x3 box filter; better behaved under non-integer
/// warps than raw per-pixel noise.
pub fn smooth_noise_image(width: usize, height: usize, channels: usize, seed: u64) -> RasterImage {
    let raw = noise_image(width, height, channels, seed);
    let mut out = RasterImage::new(width, height, channels, 0.0).expect("valid shape");
    for y in 0..height {
        for x in 0..width {
            for c in 0..channels {
                let mut acc = 0.0f32;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        acc += raw.get_clamped(x as i64 + dx, y as i64 + dy, c);
                    }
                }
                out.set(x, y, c, acc / 9.0);
            }
        }
    }
    out
}

/// Content pasted into an occluder rectangle.
#[derive(Debug, Clone, Copy)]
pub enum OccluderFill {
    /// Checkered high-contrast noise: strong gradient energy everywhere, so
    /// patch costs inside the occluder are dominated by the occluder itself
    /// rather than by whatever background the patch still overlaps.
    HighContrastNoise,
    /// A copy of the base image shifted by `(dx, dy)`: repeated texture
    /// whose true content exists elsewhere, producing low-cost wrong
    /// matches that can pass consistency checks by accident.
    CopiedRegion { dx: i32, dy: i32 },
}

/// Ground-truth motion model for a synthetic pair.
#[derive(Debug, Clone, Copy)]
pub enum SynthMotion {
    /// Uniform shift of the whole image.
    Translation { tx: f64, ty: f64 },
    /// Target position is `m * [x, y, 1]`; the motion is `m*p - p`.
    Affine { m: [[f64; 3]; 2] },
    /// Uniform background shift plus a rectangle `(x, y, w, h)` of content
    /// pasted over the first image only, i.e. occluded in the second.
    Occluder {
        tx: f64,
        ty: f64,
        rect: (usize, usize, usize, usize),
        fill: OccluderFill,
    },
}

impl SynthMotion {
    /// Target position of source pixel `p` under the motion.
    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        match *self {
            SynthMotion::Translation { tx, ty } | SynthMotion::Occluder { tx, ty, .. } => {
                (x + tx, y + ty)
            }
            SynthMotion::Affine { m } => (
                m[0][0] * x + m[0][1] * y + m[0][2],
                m[1][0] * x + m[1][1] * y + m[1][2],
            ),
        }
    }

    /// Inverse map (target -> source); `None` for non-invertible affines.
    fn inverse(&self) -> Option<SynthMotion> {
        match *self {
            SynthMotion::Translation { tx, ty } | SynthMotion::Occluder { tx, ty, .. } => {
                Some(SynthMotion::Translation { tx: -tx, ty: -ty })
            }
            SynthMotion::Affine { m } => {
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                if det.abs() < 1e-9 {
                    return None;
                }
                let inv = [
                    [
                        m[1][1] / det,
                        -m[0][1] / det,
                        (m[0][1] * m[1][2] - m[1][1] * m[0][2]) / det,
                    ],
                    [
                        -m[1][0] / det,
                        m[0][0] / det,
                        (m[1][0] * m[0][2] - m[0][0] * m[1][2]) / det,
                    ],
                ];
                Some(SynthMotion::Affine { m: inv })
            }
        }
    }
}

/// A synthetic pair with its exact flow and the evaluatable-pixel mask.
#[derive(Debug, Clone)]
pub struct SynthPair {
    pub img1: RasterImage,
    pub img2: RasterImage,
    pub gt: FlowField,
    pub mask: ValidityMask,
}

fn bilinear(img: &RasterImage, x: f64, y: f64, c: usize) -> f32 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = (x - x0) as f32;
    let fy = (y - y0) as f32;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let v00 = img.get_clamped(x0, y0, c);
    let v10 = img.get_clamped(x0 + 1, y0, c);
    let v01 = img.get_clamped(x0, y0 + 1, c);
    let v11 = img.get_clamped(x0 + 1, y0 + 1, c);
    (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11)
}

/// Builds `img2` as the warp of `base` under `motion`, with exact per-pixel
/// ground truth and a validity mask.
///
/// `img2` pixels without a source inside `base` are filled with seeded
/// noise. The mask marks pixels whose target stays in bounds and, for
/// occluder motions, excludes the pasted rectangle.
pub fn synth_pair(base: &RasterImage, motion: &SynthMotion, seed: u64) -> Result<SynthPair> {
    let (w, h, ch) = (base.width(), base.height(), base.channels());
    let inverse = motion.inverse().ok_or_else(|| {
        PgmError::InvalidParameter("synthetic affine motion is not invertible".into())
    })?;

    let mut gt = FlowField::new(w, h);
    let mut mask = ValidityMask::all_valid(w, h);
    let mut in_bounds = 0usize;
    for y in 0..h {
        for x in 0..w {
            let (txp, typ) = motion.map(x as f64, y as f64);
            gt.set(x, y, (txp - x as f64) as f32, (typ - y as f64) as f32);
            let ok = txp >= 0.0 && typ >= 0.0 && txp <= (w - 1) as f64 && typ <= (h - 1) as f64;
            mask.set(x, y, ok);
            if ok {
                in_bounds += 1;
            }
        }
    }
    if in_bounds * 2 < w * h {
        return Err(PgmError::InvalidParameter(format!(
            "motion keeps only {in_bounds} of {} pixels in bounds",
            w * h
        )));
    }

    let mut fill_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut img2 = RasterImage::new(w, h, ch, 0.0)?;
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = inverse.map(x as f64, y as f64);
            if sx >= 0.0 && sy >= 0.0 && sx <= (w - 1) as f64 && sy <= (h - 1) as f64 {
                for c in 0..ch {
                    img2.set(x, y, c, bilinear(base, sx, sy, c));
                }
            } else {
                for c in 0..ch {
                    img2.set(x, y, c, fill_rng.gen_range(0.0f32..255.0));
                }
            }
        }
    }

    let mut img1 = base.clone();
    if let SynthMotion::Occluder { rect, fill, .. } = motion {
        let (rx, ry, rw, rh) = *rect;
        if rx + rw > w || ry + rh > h {
            return Err(PgmError::InvalidParameter(format!(
                "occluder rectangle {rect:?} leaves the {w}x{h} image"
            )));
        }
        let mut occ_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51_7c_c1_b7);
        for y in ry..ry + rh {
            for x in rx..rx + rw {
                match *fill {
                    OccluderFill::HighContrastNoise => {
                        let (lo, hi) = if (x + y) % 2 == 0 {
                            (200.0f32, 255.0f32)
                        } else {
                            (0.0f32, 55.0f32)
                        };
                        for c in 0..ch {
                            img1.set(x, y, c, occ_rng.gen_range(lo..hi));
                        }
                    }
                    OccluderFill::CopiedRegion { dx, dy } => {
                        let sx = (x as i32 + dx).clamp(0, w as i32 - 1) as usize;
                        let sy = (y as i32 + dy).clamp(0, h as i32 - 1) as usize;
                        for c in 0..ch {
                            img1.set(x, y, c, base.get(sx, sy, c));
                        }
                    }
                }
                mask.set(x, y, false);
            }
        }
    }

    Ok(SynthPair {
        img1,
        img2,
        gt,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::endpoint_metrics;

    #[test]
    fn integer_translation_is_an_exact_shift() {
        let base = noise_image(24, 18, 3, 1);
        let pair = synth_pair(&base, &SynthMotion::Translation { tx: 3.0, ty: 2.0 }, 9).unwrap();
        for y in 0..18usize {
            for x in 0..24usize {
                if !pair.mask.is_valid(x, y) {
                    continue;
                }
                assert_eq!(pair.gt.get(x, y), (3.0, 2.0));
                for c in 0..3 {
                    assert_eq!(pair.img2.get(x + 3, y + 2, c), pair.img1.get(x, y, c));
                }
            }
        }
    }

    #[test]
    fn identity_motion_reproduces_the_image() {
        let base = noise_image(10, 10, 1, 2);
        let pair = synth_pair(&base, &SynthMotion::Translation { tx: 0.0, ty: 0.0 }, 0).unwrap();
        assert_eq!(pair.img2, pair.img1);
        let m = endpoint_metrics(&pair.gt, &FlowField::new(10, 10), Some(&pair.mask), 3.0).unwrap();
        assert_eq!(m.aee, 0.0);
    }

    #[test]
    fn gt_is_zero_aee_against_itself_under_its_mask() {
        let base = noise_image(20, 16, 3, 3);
        let motion = SynthMotion::Affine {
            m: [[1.02, 0.01, -1.0], [-0.01, 0.98, 2.0]],
        };
        let pair = synth_pair(&base, &motion, 5).unwrap();
        let m = endpoint_metrics(&pair.gt, &pair.gt, Some(&pair.mask), 3.0).unwrap();
        assert_eq!(m.aee, 0.0);
        assert!(m.valid_count > 0);
    }

    #[test]
    fn rotation_matches_closed_form() {
        let base = noise_image(21, 21, 1, 4);
        let (cx, cy) = (10.0f64, 10.0f64);
        let th = 10.0f64.to_radians();
        let (c, s) = (th.cos(), th.sin());
        let motion = SynthMotion::Affine {
            m: [[c, -s, cx - c * cx + s * cy], [s, c, cy - s * cx - c * cy]],
        };
        let pair = synth_pair(&base, &motion, 6).unwrap();
        for y in 0..21usize {
            for x in 0..21usize {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let eu = (c * dx - s * dy) - dx;
                let ev = (s * dx + c * dy) - dy;
                let (u, v) = pair.gt.get(x, y);
                assert!((u as f64 - eu).abs() < 1e-5 && (v as f64 - ev).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn degenerate_affine_and_large_motion_are_rejected() {
        let base = noise_image(10, 10, 1, 5);
        let singular = SynthMotion::Affine {
            m: [[1.0, 2.0, 0.0], [2.0, 4.0, 0.0]],
        };
        assert!(synth_pair(&base, &singular, 0).is_err());
        let too_far = SynthMotion::Translation { tx: 9.0, ty: 9.0 };
        assert!(synth_pair(&base, &too_far, 0).is_err());
    }

    #[test]
    fn occluder_is_pasted_and_masked() {
        let base = noise_image(32, 24, 3, 7);
        let motion = SynthMotion::Occluder {
            tx: 2.0,
            ty: 0.0,
            rect: (10, 8, 6, 5),
            fill: OccluderFill::HighContrastNoise,
        };
        let pair = synth_pair(&base, &motion, 11).unwrap();
        // The rectangle differs from the base and is masked out.
        let mut differs = 0;
        for y in 8..13usize {
            for x in 10..16usize {
                assert!(!pair.mask.is_valid(x, y));
                if pair.img1.pixel(x, y) != base.pixel(x, y) {
                    differs += 1;
                }
            }
        }
        assert!(differs > 25);
        // img2 is the occluder-free warp of the base.
        assert_eq!(pair.img2.get(5 + 2, 5, 0), base.get(5, 5, 0));
    }
}
