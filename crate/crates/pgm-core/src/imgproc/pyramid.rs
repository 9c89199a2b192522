//! Area-average downsampling and pyramid construction.

use super::color::{convert_color_space, ColorSpace};
use super::gradient::{apply_variant, build_gradient_image, sobel_gradients};
use super::{GradientImage, GradientVariant, RasterImage};
use crate::error::{PgmError, Result};

/// Box/area-average resampling of a raw interleaved buffer. Each output
/// pixel averages the source box `[x/s, (x+1)/s) x [y/s, (y+1)/s)` with
/// fractional coverage weights, clipped to the source bounds.
pub(crate) fn downsample_buffer(
    data: &[f32],
    width: usize,
    height: usize,
    channels: usize,
    factor: f64,
) -> (Vec<f32>, usize, usize) {
    let ow = (width as f64 * factor).ceil() as usize;
    let oh = (height as f64 * factor).ceil() as usize;
    let inv = 1.0 / factor;
    let mut out = vec![0.0f32; ow * oh * channels];
    let mut acc = vec![0.0f64; channels];

    for oy in 0..oh {
        let y0 = oy as f64 * inv;
        let y1 = ((oy + 1) as f64 * inv).min(height as f64);
        for ox in 0..ow {
            let x0 = ox as f64 * inv;
            let x1 = ((ox + 1) as f64 * inv).min(width as f64);
            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut area = 0.0f64;

            let mut sy = y0.floor() as usize;
            while (sy as f64) < y1 {
                let wy = (y1.min((sy + 1) as f64) - y0.max(sy as f64)).max(0.0);
                let mut sx = x0.floor() as usize;
                while (sx as f64) < x1 {
                    let wx = (x1.min((sx + 1) as f64) - x0.max(sx as f64)).max(0.0);
                    let w = wx * wy;
                    let base = (sy * width + sx) * channels;
                    for c in 0..channels {
                        acc[c] += w * data[base + c] as f64;
                    }
                    area += w;
                    sx += 1;
                }
                sy += 1;
            }

            let base = (oy * ow + ox) * channels;
            for c in 0..channels {
                out[base + c] = (acc[c] / area) as f32;
            }
        }
    }
    (out, ow, oh)
}

/// Shrinks an image by `factor in (0, 1)` with box/area averaging.
///
/// Output dimensions are `ceil(dims * factor)`.
pub fn downsample(img: &RasterImage, factor: f64) -> Result<RasterImage> {
    if !(factor > 0.0 && factor < 1.0) {
        return Err(PgmError::InvalidParameter(format!(
            "downsample factor must lie in (0, 1), got {factor}"
        )));
    }
    let (data, ow, oh) = downsample_buffer(
        img.data(),
        img.width(),
        img.height(),
        img.channels(),
        factor,
    );
    RasterImage::from_data(ow, oh, img.channels(), data)
}

/// An ordered stack of progressively smaller images; level 0 is full
/// resolution.
#[derive(Debug, Clone)]
pub struct ImagePyramid {
    levels: Vec<RasterImage>,
    factor: f64,
}

impl ImagePyramid {
    pub fn levels(&self) -> &[RasterImage] {
        &self.levels
    }

    pub fn level(&self, l: usize) -> &RasterImage {
        &self.levels[l]
    }

    pub fn count(&self) -> usize {
        self.levels.len()
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }
}

/// Builds `count` levels by repeatedly downsampling, level `l` being the
/// `l`-fold shrink of the original.
pub fn build_image_pyramid(img: &RasterImage, factor: f64, count: usize) -> Result<ImagePyramid> {
    if count < 2 {
        return Err(PgmError::InvalidParameter(format!(
            "pyramid needs at least 2 levels, got {count}"
        )));
    }
    let mut levels = vec![img.clone()];
    for _ in 1..count {
        let next = downsample(levels.last().expect("nonempty"), factor)?;
        levels.push(next);
    }
    Ok(ImagePyramid { levels, factor })
}

/// Gradient pyramid: per level, downsample, convert to `spaces[l]`, take
/// Sobel gradients of size `sobel_size`, then reduce to `variant`.
pub fn build_gradient_pyramid(
    img: &RasterImage,
    spaces: &[ColorSpace],
    variant: GradientVariant,
    sobel_size: usize,
    count: usize,
    factor: f64,
) -> Result<Vec<GradientImage>> {
    if spaces.len() != count {
        return Err(PgmError::InvalidParameter(format!(
            "need one color space per level: {} given for {} levels",
            spaces.len(),
            count
        )));
    }
    if matches!(variant, GradientVariant::G | GradientVariant::Gd)
        && spaces.iter().any(|&s| s != ColorSpace::Gray)
    {
        return Err(PgmError::InvalidParameter(
            "gray variants require every pyramid level to use the gray color space".into(),
        ));
    }
    let pyramid = build_image_pyramid(img, factor, count)?;
    let mut out = Vec::with_capacity(count);
    for (level, &space) in pyramid.levels().iter().zip(spaces) {
        let converted = convert_color_space(level, space)?;
        let (gx, gy) = sobel_gradients(&converted, sobel_size)?;
        out.push(apply_variant(build_gradient_image(&gx, &gy)?, variant));
    }
    Ok(out)
}
