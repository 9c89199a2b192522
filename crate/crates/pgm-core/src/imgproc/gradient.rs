//! Sobel gradients and the stacked gradient-image representation.

use super::RasterImage;
use crate::error::{PgmError, Result};

/// Feature level used for patch matching.
///
/// `C`/`G` are full color/gray gradients; `Cd`/`Gd` keep only the per-element
/// sign of the gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientVariant {
    C,
    G,
    Cd,
    Gd,
}

impl GradientVariant {
    pub fn is_direction_only(self) -> bool {
        matches!(self, GradientVariant::Cd | GradientVariant::Gd)
    }

    /// Channel count of the source image this variant operates on.
    pub fn source_channels(self) -> usize {
        match self {
            GradientVariant::C | GradientVariant::Cd => 3,
            GradientVariant::G | GradientVariant::Gd => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GradientVariant::C => "C",
            GradientVariant::G => "G",
            GradientVariant::Cd => "CD",
            GradientVariant::Gd => "GD",
        }
    }
}

impl std::str::FromStr for GradientVariant {
    type Err = PgmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "C" => Ok(GradientVariant::C),
            "G" => Ok(GradientVariant::G),
            "CD" => Ok(GradientVariant::Cd),
            "GD" => Ok(GradientVariant::Gd),
            other => Err(PgmError::InvalidParameter(format!(
                "unknown gradient variant '{other}' (expected C, G, CD or GD)"
            ))),
        }
    }
}

/// Per-pixel stack of the horizontal and vertical gradients of every source
/// channel: `2C` channels for a `C`-channel source, laid out as
/// `[Gx_0..Gx_C, Gy_0..Gy_C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
    variant: GradientVariant,
}

impl GradientImage {
    /// Wraps a raw buffer; mainly useful for tests and benchmarks.
    pub fn from_data(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f32>,
        variant: GradientVariant,
    ) -> Result<Self> {
        if channels != 2 && channels != 6 {
            return Err(PgmError::InvalidInput(format!(
                "gradient image must have 2 or 6 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(PgmError::InvalidInput(format!(
                "buffer length {} does not match {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
            variant,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn variant(&self) -> GradientVariant {
        self.variant
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// All channels of one pixel.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let base = (y * self.width + x) * self.channels;
        &self.data[base..base + self.channels]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }
}

/// Separable Sobel kernel of odd size `s >= 3`: the derivative tap is
/// `[-1, 0, 1]` repeatedly smoothed by `[1, 2, 1]`, the smoothing tap is the
/// binomial row. For `s = 3` this is the canonical
/// `[[-1,0,1],[-2,0,2],[-1,0,1]]` kernel.
fn sobel_taps(size: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if size < 3 || size.is_multiple_of(2) {
        return Err(PgmError::InvalidParameter(format!(
            "Sobel kernel size must be odd and >= 3, got {size}"
        )));
    }
    let conv = |a: &[f64], b: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, &av) in a.iter().enumerate() {
            for (j, &bv) in b.iter().enumerate() {
                out[i + j] += av * bv;
            }
        }
        out
    };
    let mut smooth = vec![1.0];
    for _ in 0..size - 1 {
        smooth = conv(&smooth, &[1.0, 1.0]);
    }
    let mut deriv = vec![-1.0, 0.0, 1.0];
    for _ in 0..(size - 3) / 2 {
        deriv = conv(&deriv, &[1.0, 2.0, 1.0]);
    }
    Ok((deriv, smooth))
}

/// Applies one horizontal and one vertical tap with replicate-edge padding.
fn filter_separable(img: &RasterImage, horiz: &[f64], vert: &[f64]) -> RasterImage {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let r = horiz.len() as i64 / 2;
    let mut tmp = vec![0.0f64; w * h * ch];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, &tap) in horiz.iter().enumerate() {
                    acc += tap * img.get_clamped(x as i64 + k as i64 - r, y as i64, c) as f64;
                }
                tmp[(y * w + x) * ch + c] = acc;
            }
        }
    }
    let mut out = RasterImage::new(w, h, ch, 0.0).expect("shape already validated");
    let rv = vert.len() as i64 / 2;
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, &tap) in vert.iter().enumerate() {
                    let yy = (y as i64 + k as i64 - rv).clamp(0, h as i64 - 1) as usize;
                    acc += tap * tmp[(yy * w + x) * ch + c];
                }
                out.set(x, y, c, acc as f32);
            }
        }
    }
    out
}

/// Per-channel horizontal and vertical Sobel responses of `img`.
///
/// Output dimensions equal the input; borders use replicate-edge padding.
pub fn sobel_gradients(img: &RasterImage, size: usize) -> Result<(RasterImage, RasterImage)> {
    let (deriv, smooth) = sobel_taps(size)?;
    let gx = filter_separable(img, &deriv, &smooth);
    let gy = filter_separable(img, &smooth, &deriv);
    Ok((gx, gy))
}

/// Stacks `gx` and `gy` into one gradient image with doubled channels.
pub fn build_gradient_image(gx: &RasterImage, gy: &RasterImage) -> Result<GradientImage> {
    if gx.width() != gy.width() || gx.height() != gy.height() || gx.channels() != gy.channels() {
        return Err(PgmError::InvalidInput(format!(
            "gradient pair shapes differ: {}x{}x{} vs {}x{}x{}",
            gx.width(),
            gx.height(),
            gx.channels(),
            gy.width(),
            gy.height(),
            gy.channels()
        )));
    }
    let (w, h, ch) = (gx.width(), gx.height(), gx.channels());
    let variant = if ch == 3 {
        GradientVariant::C
    } else {
        GradientVariant::G
    };
    let mut data = Vec::with_capacity(w * h * ch * 2);
    for y in 0..h {
        for x in 0..w {
            data.extend_from_slice(gx.pixel(x, y));
            data.extend_from_slice(gy.pixel(x, y));
        }
    }
    GradientImage::from_data(w, h, 2 * ch, data, variant)
}

/// Reduces a full gradient image to the requested feature level.
///
/// `C`/`G` return the input unchanged; `Cd`/`Gd` map every element to
/// `v / |v|` with `0` staying `0`, i.e. its sign.
pub fn apply_variant(g: GradientImage, variant: GradientVariant) -> GradientImage {
    if !variant.is_direction_only() {
        return g;
    }
    let mut g = g;
    for v in &mut g.data {
        *v = if *v > 0.0 {
            1.0
        } else if *v < 0.0 {
            -1.0
        } else {
            0.0
        };
    }
    g.variant = variant;
    g
}
