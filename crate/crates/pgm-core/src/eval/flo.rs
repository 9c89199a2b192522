//! Middlebury `.flo` reader and writer.
//!
//! Layout: the 4-byte float tag 202021.25 (bytes "PIEH"), 32-bit
//! little-endian width and height, then row-major interleaved `(u, v)` as
//! 32-bit little-endian floats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{PgmError, Result};
use crate::interp::FlowField;

pub const FLO_MAGIC: f32 = 202021.25;

/// Largest accepted dimension, matching the sanity bound of the reference
/// reader.
const MAX_DIM: i32 = 99_999;

pub fn write_flo(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&FLO_MAGIC.to_le_bytes())?;
    out.write_all(&(flow.width() as i32).to_le_bytes())?;
    out.write_all(&(flow.height() as i32).to_le_bytes())?;
    for v in flow.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut header = [0u8; 12];
    reader
        .read_exact(&mut header)
        .map_err(|_| PgmError::Truncated {
            expected: 12,
            actual: 0,
        })?;
    let magic = f32::from_le_bytes(header[0..4].try_into().expect("4 bytes"));
    if magic != FLO_MAGIC {
        return Err(PgmError::BadMagic(magic));
    }
    let width = i32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    let height = i32::from_le_bytes(header[8..12].try_into().expect("4 bytes"));
    if width < 1 || height < 1 || width > MAX_DIM || height > MAX_DIM {
        return Err(PgmError::DimensionOverflow { width, height });
    }

    let expected = width as usize * height as usize * 2 * 4;
    let mut payload = Vec::with_capacity(expected);
    reader.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(PgmError::Truncated {
            expected,
            actual: payload.len(),
        });
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    FlowField::from_data(width as usize, height as usize, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_pixel_file_is_twenty_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.flo");
        write_flo(&FlowField::new(1, 1), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 20); // 12-byte header + 8-byte payload
        assert_eq!(&bytes[0..4], b"PIEH");
        assert_eq!(&bytes[4..8], &1i32.to_le_bytes());
        assert_eq!(&bytes[8..12], &1i32.to_le_bytes());
        assert!(bytes[12..].iter().all(|&b| b == 0));
    }

    #[test]
    fn round_trip_is_bitwise_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.flo");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f32> = (0..7 * 5 * 2)
            .map(|_| rng.gen_range(-1e4..1e4f32))
            .collect();
        let flow = FlowField::from_data(7, 5, data).unwrap();
        write_flo(&flow, &path).unwrap();
        let back = read_flo(&path).unwrap();
        assert_eq!(back.data(), flow.data());
        // Writing what was read reproduces the bytes.
        let path2 = dir.path().join("rt2.flo");
        write_flo(&back, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn bad_magic_truncation_and_overflow_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.flo");

        let mut bytes = Vec::new();
        bytes.extend_from_slice(&0.0f32.to_le_bytes());
        bytes.extend_from_slice(&1i32.to_le_bytes());
        bytes.extend_from_slice(&1i32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 8]);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_flo(&path), Err(PgmError::BadMagic(m)) if m == 0.0));

        let mut bytes = Vec::new();
        bytes.extend_from_slice(&FLO_MAGIC.to_le_bytes());
        bytes.extend_from_slice(&3i32.to_le_bytes());
        bytes.extend_from_slice(&2i32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 10]); // needs 48
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_flo(&path),
            Err(PgmError::Truncated {
                expected: 48,
                actual: 10
            })
        ));

        let mut bytes = Vec::new();
        bytes.extend_from_slice(&FLO_MAGIC.to_le_bytes());
        bytes.extend_from_slice(&(-4i32).to_le_bytes());
        bytes.extend_from_slice(&2i32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_flo(&path),
            Err(PgmError::DimensionOverflow {
                width: -4,
                height: 2
            })
        ));
    }
}
