//! Dataset persistence.
//!
//! Layout: one JSON header line, then `n·h·w` little-endian `f32` pixels in
//! sample-major row-major order, then a CRC-64 (XZ polynomial) of the pixel
//! blob as 8 little-endian bytes. The header carries the ids and origins so
//! a load/save roundtrip is the identity on `(pixels, ids, origin)`;
//! extremeness is recomputed on load rather than trusted from disk.

use std::fs;
use std::path::Path;

use crc::{Crc, CRC_64_XZ};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, ExtremenessMeasure, GridSample, Origin};

const MAGIC: &str = "EXG1";
const DTYPE: &str = "f32le";
const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    magic: String,
    n: usize,
    h: usize,
    w: usize,
    raw_min: f64,
    raw_max: f64,
    dtype: String,
    ids: Vec<u64>,
    origins: Vec<u8>,
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    let header = Header {
        magic: MAGIC.into(),
        n: dataset.samples.len(),
        h: dataset.height,
        w: dataset.width,
        raw_min: dataset.raw_scale.0,
        raw_max: dataset.raw_scale.1,
        dtype: DTYPE.into(),
        ids: dataset.samples.iter().map(|s| s.id).collect(),
        origins: dataset
            .samples
            .iter()
            .map(|s| match s.origin {
                Origin::Real => 0,
                Origin::Generated => 1,
            })
            .collect(),
    };
    let mut bytes = serde_json::to_string(&header)
        .expect("header serializes")
        .into_bytes();
    bytes.push(b'\n');
    let blob_start = bytes.len();
    bytes.reserve(dataset.samples.len() * dataset.height * dataset.width * 4 + 8);
    for s in &dataset.samples {
        for v in s.pixels.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = CRC64.checksum(&bytes[blob_start..]);
    bytes.extend_from_slice(&crc.to_le_bytes());
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_dataset<M: ExtremenessMeasure<f32>>(
    path: &Path,
    measure: &M,
) -> Result<Dataset, DataError> {
    let bytes = fs::read(path)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| DataError::MalformedHeader("no newline-terminated header".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| DataError::MalformedHeader(e.to_string()))?;
    if header.magic != MAGIC {
        return Err(DataError::MalformedHeader(format!(
            "magic {:?}, expected {MAGIC:?}",
            header.magic
        )));
    }
    if header.dtype != DTYPE {
        return Err(DataError::MalformedHeader(format!(
            "dtype {:?}, expected {DTYPE:?}",
            header.dtype
        )));
    }
    if header.ids.len() != header.n || header.origins.len() != header.n {
        return Err(DataError::MalformedHeader(format!(
            "ids/origins length {}/{} does not match n = {}",
            header.ids.len(),
            header.origins.len(),
            header.n
        )));
    }
    let expected = header.n * header.h * header.w * 4;
    let rest = &bytes[nl + 1..];
    if rest.len() < expected + 8 {
        return Err(DataError::Truncated {
            expected: expected + 8,
            got: rest.len(),
        });
    }
    if rest.len() > expected + 8 {
        return Err(DataError::ShapeMismatch {
            expected: expected + 8,
            got: rest.len(),
        });
    }
    let (blob, crc_bytes) = rest.split_at(expected);
    let stored = u64::from_le_bytes(crc_bytes.try_into().expect("8 crc bytes"));
    let computed = CRC64.checksum(blob);
    if stored != computed {
        return Err(DataError::ChecksumMismatch { stored, computed });
    }
    let px_per = header.h * header.w;
    let mut samples = Vec::with_capacity(header.n);
    for i in 0..header.n {
        let mut pixels = Vec::with_capacity(px_per);
        let base = i * px_per * 4;
        for p in 0..px_per {
            let off = base + p * 4;
            let v = f32::from_le_bytes(blob[off..off + 4].try_into().expect("4 bytes"));
            pixels.push(v);
        }
        let pixels = Array2::from_shape_vec((header.h, header.w), pixels)
            .expect("shape matches header");
        let origin = if header.origins[i] == 0 {
            Origin::Real
        } else {
            Origin::Generated
        };
        samples.push(GridSample::new(pixels, origin, header.ids[i], measure));
    }
    Ok(Dataset {
        samples,
        sorted_desc: false,
        height: header.h,
        width: header.w,
        raw_scale: (header.raw_min, header.raw_max),
    })
}
