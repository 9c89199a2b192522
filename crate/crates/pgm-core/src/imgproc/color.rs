//! Color-space conversions on the `[0, 255]` input scale.
//!
//! Reference transforms: ITU-R BT.601 for luma and YCrCb (full-range, 128
//! neutral offset), and the sRGB/D65 standard for CIELab. Output ranges:
//! gray and YCrCb stay on `[0, 255]`; Lab uses `L in [0, 100]`,
//! `a, b in roughly [-128, 127]`.

use super::RasterImage;
use crate::error::{PgmError, Result};

/// Target color space for gradient computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorSpace {
    Rgb,
    Gray,
    CieLab,
    YCrCb,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Gray => 1,
            _ => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ColorSpace::Rgb => "rgb",
            ColorSpace::Gray => "gray",
            ColorSpace::CieLab => "lab",
            ColorSpace::YCrCb => "ycrcb",
        }
    }
}

const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;
const YCRCB_OFFSET: f64 = 128.0;

#[inline]
fn bt601_luma(r: f64, g: f64, b: f64) -> f64 {
    KR * r + KG * g + KB * b
}

#[inline]
fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

// D65 reference white.
const XN: f64 = 0.950_456;
const YN: f64 = 1.0;
const ZN: f64 = 1.088_754;

#[inline]
fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

fn rgb_to_lab(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let rl = srgb_to_linear(r / 255.0);
    let gl = srgb_to_linear(g / 255.0);
    let bl = srgb_to_linear(b / 255.0);
    let x = 0.412_453 * rl + 0.357_580 * gl + 0.180_423 * bl;
    let y = 0.212_671 * rl + 0.715_160 * gl + 0.072_169 * bl;
    let z = 0.019_334 * rl + 0.119_193 * gl + 0.950_227 * bl;
    let fx = lab_f(x / XN);
    let fy = lab_f(y / YN);
    let fz = lab_f(z / ZN);
    (116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))
}

/// Converts an image into `target`, producing `target.channels()` channels.
///
/// The source must have 3 channels, except that a 1-channel source is
/// accepted unchanged when `target` is [`ColorSpace::Gray`].
pub fn convert_color_space(img: &RasterImage, target: ColorSpace) -> Result<RasterImage> {
    if img.channels() == 1 {
        if target == ColorSpace::Gray {
            return Ok(img.clone());
        }
        return Err(PgmError::InvalidInput(format!(
            "cannot convert 1-channel image to {}",
            target.name()
        )));
    }
    if img.channels() != 3 {
        return Err(PgmError::InvalidInput(format!(
            "color conversion expects 3 channels, got {}",
            img.channels()
        )));
    }

    let (w, h) = (img.width(), img.height());
    let mut out = RasterImage::new(w, h, target.channels(), 0.0)?;
    for y in 0..h {
        for x in 0..w {
            let p = img.pixel(x, y);
            let (r, g, b) = (p[0] as f64, p[1] as f64, p[2] as f64);
            match target {
                ColorSpace::Rgb => {
                    out.set(x, y, 0, r as f32);
                    out.set(x, y, 1, g as f32);
                    out.set(x, y, 2, b as f32);
                }
                ColorSpace::Gray => {
                    out.set(x, y, 0, bt601_luma(r, g, b) as f32);
                }
                ColorSpace::YCrCb => {
                    let luma = bt601_luma(r, g, b);
                    let cr = (r - luma) * (0.5 / (1.0 - KR)) + YCRCB_OFFSET;
                    let cb = (b - luma) * (0.5 / (1.0 - KB)) + YCRCB_OFFSET;
                    out.set(x, y, 0, luma as f32);
                    out.set(x, y, 1, cr as f32);
                    out.set(x, y, 2, cb as f32);
                }
                ColorSpace::CieLab => {
                    let (l, a, bb) = rgb_to_lab(r, g, b);
                    out.set(x, y, 0, l as f32);
                    out.set(x, y, 1, a as f32);
                    out.set(x, y, 2, bb as f32);
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of the YCrCb conversion, exact up to floating-point rounding.
pub fn ycrcb_to_rgb(img: &RasterImage) -> Result<RasterImage> {
    if img.channels() != 3 {
        return Err(PgmError::InvalidInput(format!(
            "ycrcb image must have 3 channels, got {}",
            img.channels()
        )));
    }
    let (w, h) = (img.width(), img.height());
    let mut out = RasterImage::new(w, h, 3, 0.0)?;
    for y in 0..h {
        for x in 0..w {
            let p = img.pixel(x, y);
            let (luma, cr, cb) = (p[0] as f64, p[1] as f64, p[2] as f64);
            let r = luma + (cr - YCRCB_OFFSET) * ((1.0 - KR) / 0.5);
            let b = luma + (cb - YCRCB_OFFSET) * ((1.0 - KB) / 0.5);
            let g = (luma - KR * r - KB * b) / KG;
            out.set(x, y, 0, r as f32);
            out.set(x, y, 1, g as f32);
            out.set(x, y, 2, b as f32);
        }
    }
    Ok(out)
}
