//! SAF1 feature files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! 0..4      magic "SAF1"
//! u32       name_len
//! name_len  image id, UTF-8
//! u32       L (locations)
//! u32       D (channels)
//! L*D*4     f32 values, location-major
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::FeatureGrid;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SAF1";
pub const EXTENSION: &str = "saf";

#[derive(Debug, Error, PartialEq)]
pub enum SafError {
    #[error("bad magic {0:?}, expected \"SAF1\"")]
    BadMagic([u8; 4]),
    #[error("truncated header")]
    TruncatedHeader,
    #[error("image id is not valid UTF-8")]
    BadImageId,
    #[error("empty grid: L={locations}, D={channels}")]
    EmptyGrid { locations: u32, channels: u32 },
    #[error("payload is {found} bytes, header declares {expected}")]
    PayloadLength { expected: usize, found: usize },
    #[error("non-finite value at location {location}, channel {channel}")]
    NonFinite { location: usize, channel: usize },
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32, SafError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or(SafError::TruncatedHeader)
}

/// Decodes one SAF1 image, widening values to f64.
pub fn decode(bytes: &[u8]) -> Result<FeatureGrid, SafError> {
    let magic: [u8; 4] = bytes
        .get(..4)
        .ok_or(SafError::TruncatedHeader)?
        .try_into()
        .unwrap();
    if &magic != MAGIC {
        return Err(SafError::BadMagic(magic));
    }
    let name_len = read_u32(bytes, 4)? as usize;
    let name_bytes = bytes.get(8..8 + name_len).ok_or(SafError::TruncatedHeader)?;
    let image_id = std::str::from_utf8(name_bytes)
        .map_err(|_| SafError::BadImageId)?
        .to_owned();
    let mut at = 8 + name_len;
    let locations = read_u32(bytes, at)?;
    let channels = read_u32(bytes, at + 4)?;
    at += 8;
    if locations == 0 || channels == 0 {
        return Err(SafError::EmptyGrid { locations, channels });
    }
    let (l, d) = (locations as usize, channels as usize);
    let payload = &bytes[at..];
    let expected = l * d * 4;
    if payload.len() != expected {
        return Err(SafError::PayloadLength {
            expected,
            found: payload.len(),
        });
    }
    let mut values = Vec::with_capacity(l * d);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(SafError::NonFinite {
                location: i / d,
                channel: i % d,
            });
        }
        values.push(f64::from(v));
    }
    let values = Tensor::matrix(l, d, values).expect("dimensions checked above");
    Ok(FeatureGrid { image_id, values })
}

/// Encodes a grid, narrowing values to f32.
pub fn encode(grid: &FeatureGrid) -> Vec<u8> {
    let id = grid.image_id.as_bytes();
    let mut out = Vec::with_capacity(16 + id.len() + grid.values.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(id.len() as u32).to_le_bytes());
    out.extend_from_slice(id);
    out.extend_from_slice(&(grid.locations() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.channels() as u32).to_le_bytes());
    for &v in grid.values.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn load_feature_grid(path: impl AsRef<Path>) -> Result<FeatureGrid> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|source| Error::Feature {
        path: path.to_owned(),
        source,
    })
}

pub fn write_feature_grid(path: impl AsRef<Path>, grid: &FeatureGrid) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(grid)).map_err(|e| Error::io(path, e))
}

/// Paths of all `*.saf` files in `dir`, sorted by file name.
pub fn feature_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == EXTENSION) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Loads every grid in a directory, or a single file when `path` is a file.
pub fn load_features(path: impl AsRef<Path>) -> Result<Vec<FeatureGrid>> {
    let path = path.as_ref();
    if path.is_file() {
        return Ok(vec![load_feature_grid(path)?]);
    }
    feature_files(path)?.iter().map(load_feature_grid).collect()
}
