//! Endpoint-error metrics against ground truth.

use crate::error::{PgmError, Result};
use crate::interp::FlowField;

/// Per-pixel boolean validity map; invalid pixels are excluded from
/// evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityMask {
    width: usize,
    height: usize,
    valid: Vec<bool>,
}

impl ValidityMask {
    pub fn all_valid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            valid: vec![true; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != width * height {
            return Err(PgmError::InvalidInput(format!(
                "mask length {} does not match {}x{}",
                valid.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            valid,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, valid: bool) {
        self.valid[y * self.width + x] = valid;
    }

    pub fn count_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Endpoint-error summary over the evaluated pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Average endpoint error in pixels; NaN when no pixel was evaluated.
    pub aee: f64,
    /// Fraction of evaluated pixels with endpoint error above the threshold;
    /// NaN when no pixel was evaluated.
    pub bad_ratio: f64,
    /// Number of pixels that entered the statistics.
    pub valid_count: usize,
}

/// Computes AEE and the bad-pixel ratio at threshold `tau` over the masked
/// pixels. An empty mask yields NaN metrics with `valid_count` 0, never a
/// silent zero.
pub fn endpoint_metrics(
    flow: &FlowField,
    gt: &FlowField,
    mask: Option<&ValidityMask>,
    tau: f64,
) -> Result<Metrics> {
    if flow.width() != gt.width() || flow.height() != gt.height() {
        return Err(PgmError::DimensionMismatch(format!(
            "flow {}x{} vs ground truth {}x{}",
            flow.width(),
            flow.height(),
            gt.width(),
            gt.height()
        )));
    }
    if let Some(m) = mask {
        if m.width() != flow.width() || m.height() != flow.height() {
            return Err(PgmError::DimensionMismatch(format!(
                "mask {}x{} vs flow {}x{}",
                m.width(),
                m.height(),
                flow.width(),
                flow.height()
            )));
        }
    }

    let mut sum = 0.0f64;
    let mut bad = 0usize;
    let mut count = 0usize;
    for y in 0..flow.height() {
        for x in 0..flow.width() {
            if let Some(m) = mask {
                if !m.is_valid(x, y) {
                    continue;
                }
            }
            let (u, v) = flow.get(x, y);
            let (gu, gv) = gt.get(x, y);
            let ee = ((u as f64 - gu as f64).powi(2) + (v as f64 - gv as f64).powi(2)).sqrt();
            sum += ee;
            if ee > tau {
                bad += 1;
            }
            count += 1;
        }
    }

    if count == 0 {
        return Ok(Metrics {
            aee: f64::NAN,
            bad_ratio: f64::NAN,
            valid_count: 0,
        });
    }
    Ok(Metrics {
        aee: sum / count as f64,
        bad_ratio: bad as f64 / count as f64,
        valid_count: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_flow(w: usize, h: usize, u: f32, v: f32) -> FlowField {
        let mut f = FlowField::new(w, h);
        for y in 0..h {
            for x in 0..w {
                f.set(x, y, u, v);
            }
        }
        f
    }

    #[test]
    fn identical_fields_have_zero_error() {
        let f = constant_flow(6, 4, 1.5, -2.5);
        let m = endpoint_metrics(&f, &f, None, 3.0).unwrap();
        assert_eq!(m.aee, 0.0);
        assert_eq!(m.bad_ratio, 0.0);
        assert_eq!(m.valid_count, 24);
    }

    #[test]
    fn three_four_five_triangle() {
        let flow = constant_flow(5, 5, 3.0, 4.0);
        let gt = constant_flow(5, 5, 0.0, 0.0);
        let m = endpoint_metrics(&flow, &gt, None, 3.0).unwrap();
        assert_eq!(m.aee, 5.0);
        assert_eq!(m.bad_ratio, 1.0);
        // Symmetric in argument order.
        let m2 = endpoint_metrics(&gt, &flow, None, 3.0).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn empty_mask_yields_nan_sentinels() {
        let f = constant_flow(3, 3, 0.0, 0.0);
        let mask = ValidityMask::from_data(3, 3, vec![false; 9]).unwrap();
        let m = endpoint_metrics(&f, &f, Some(&mask), 3.0).unwrap();
        assert!(m.aee.is_nan() && m.bad_ratio.is_nan());
        assert_eq!(m.valid_count, 0);
    }

    #[test]
    fn mask_excludes_pixels() {
        let mut flow = constant_flow(2, 1, 0.0, 0.0);
        flow.set(1, 0, 30.0, 40.0);
        let gt = constant_flow(2, 1, 0.0, 0.0);
        let mut mask = ValidityMask::all_valid(2, 1);
        mask.set(1, 0, false);
        let m = endpoint_metrics(&flow, &gt, Some(&mask), 3.0).unwrap();
        assert_eq!(m.aee, 0.0);
        assert_eq!(m.valid_count, 1);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = constant_flow(3, 3, 0.0, 0.0);
        let b = constant_flow(3, 4, 0.0, 0.0);
        assert!(endpoint_metrics(&a, &b, None, 3.0).is_err());
        let mask = ValidityMask::all_valid(2, 2);
        assert!(endpoint_metrics(&a, &a, Some(&mask), 3.0).is_err());
    }
}
