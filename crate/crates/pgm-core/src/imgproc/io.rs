//! 8-bit image decoding (PNG, binary PPM/PGM) and PNG output.

use std::path::Path;

use image::DynamicImage;

use super::RasterImage;
use crate::error::{PgmError, Result};

/// Reads an 8-bit PNG, PPM or PGM file into a `[0, 255]`-scaled image.
///
/// Grayscale sources decode to 1 channel, color sources to 3 (alpha is
/// dropped).
pub fn read_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let decoded = image::open(path.as_ref()).map_err(|e| match e {
        image::ImageError::IoError(io) => PgmError::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.as_ref().display()),
        )),
        other => PgmError::Codec(other),
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    match decoded {
        DynamicImage::ImageLuma8(img) => {
            RasterImage::from_data(w, h, 1, img.into_raw().iter().map(|&v| v as f32).collect())
        }
        other => {
            let rgb = other.into_rgb8();
            RasterImage::from_data(w, h, 3, rgb.into_raw().iter().map(|&v| v as f32).collect())
        }
    }
}

/// Writes a 1- or 3-channel image as 8-bit PNG, clamping values to
/// `[0, 255]`.
pub fn write_png(img: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    match img.channels() {
        1 => image::GrayImage::from_raw(w, h, bytes)
            .expect("buffer sized from image")
            .save_with_format(path.as_ref(), image::ImageFormat::Png)?,
        3 => image::RgbImage::from_raw(w, h, bytes)
            .expect("buffer sized from image")
            .save_with_format(path.as_ref(), image::ImageFormat::Png)?,
        n => {
            return Err(PgmError::InvalidInput(format!(
                "cannot encode {n}-channel image as PNG"
            )))
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_preserves_8bit_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let mut img = RasterImage::new(5, 4, 3, 0.0).unwrap();
        for y in 0..4 {
            for x in 0..5 {
                for c in 0..3 {
                    img.set(x, y, c, ((x * 50 + y * 13 + c * 7) % 256) as f32);
                }
            }
        }
        write_png(&img, &path).unwrap();
        let back = read_image(&path).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn reads_binary_pgm_and_ppm() {
        let dir = tempfile::tempdir().unwrap();
        let pgm = dir.path().join("t.pgm");
        std::fs::write(&pgm, b"P5\n3 2\n255\n\x00\x40\x80\xc0\xff\x10").unwrap();
        let img = read_image(&pgm).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (3, 2, 1));
        assert_eq!(img.get(1, 0, 0), 64.0);
        assert_eq!(img.get(2, 1, 0), 16.0);

        let ppm = dir.path().join("t.ppm");
        std::fs::write(&ppm, b"P6\n1 1\n255\n\x01\x02\x03").unwrap();
        let img = read_image(&ppm).unwrap();
        assert_eq!((img.channels(), img.get(0, 0, 2)), (3, 3.0));
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(read_image("/nonexistent/nope.png").is_err());
    }
}
