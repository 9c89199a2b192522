//! Image representation, color-space conversion, gradient-image
//! construction and pyramid building.
//!
//! Images are dense row-major buffers of `f32` with interleaved channels.
//! Pixel values are kept on the source 8-bit scale, i.e. `[0, 255]`, until a
//! color conversion maps them to that space's documented range.

mod color;
mod gradient;
mod io;
mod pyramid;

pub use color::{convert_color_space, ycrcb_to_rgb, ColorSpace};
pub use gradient::{
    apply_variant, build_gradient_image, sobel_gradients, GradientImage, GradientVariant,
};
pub use io::{read_image, write_png};
pub use pyramid::{build_gradient_pyramid, build_image_pyramid, downsample, ImagePyramid};

pub(crate) use pyramid::downsample_buffer;

use crate::error::{PgmError, Result};

/// A multi-channel floating-point image.
///
/// Data is row-major with interleaved channels: the value of channel `c` at
/// `(x, y)` lives at index `(y * width + x) * channels + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl RasterImage {
    /// Creates an image filled with a constant value.
    pub fn new(width: usize, height: usize, channels: usize, fill: f32) -> Result<Self> {
        Self::validate_shape(width, height, channels)?;
        Ok(Self {
            width,
            height,
            channels,
            data: vec![fill; width * height * channels],
        })
    }

    /// Wraps an existing buffer. The buffer length must match the shape.
    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        Self::validate_shape(width, height, channels)?;
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
        })
    }

    fn validate_shape(width: usize, height: usize, channels: usize) -> Result<()> {
        if width == 0 || height == 0 {
            return Err(PgmError::InvalidInput(format!(
                "empty image {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(PgmError::InvalidInput(format!(
                "unsupported channel count {channels} (expected 1 or 3)"
            )));
        }
        Ok(())
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

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f32) {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        self.data[(y * self.width + x) * self.channels + c] = value;
    }

    /// All channels of one pixel.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let base = (y * self.width + x) * self.channels;
        &self.data[base..base + self.channels]
    }

    /// Samples with replicate-edge semantics for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64, c: usize) -> f32 {
        let xc = x.clamp(0, self.width as i64 - 1) as usize;
        let yc = y.clamp(0, self.height as i64 - 1) as usize;
        self.get(xc, yc, c)
    }
}
