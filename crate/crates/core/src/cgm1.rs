//! Binary formats.
//!
//! # CGM1 (datasets)
//!
//! ```text
//! offset  size      field
//! 0       4         magic "CGM1" (43 47 4D 31)
//! 4       4         n, u32 little-endian
//! 8       4         d, u32 little-endian
//! 12      4·n·d     features, f32 little-endian, row-major
//! ..      4·n       labels, i32 little-endian
//! ```
//!
//! The stored payload is `f32`; loading widens to `f64` and re-normalizes rows,
//! so the bit-exact round trip holds for the raw payload ([`RawCgm1`]) and for
//! rows that are exactly unit-norm in `f32`.
//!
//! # CGH1 (Gram matrix dumps)
//!
//! Magic "CGH1", u32 LE `m`, then `m·m` f64 LE row-major entries.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::dataset::{io_err, Dataset, DatasetError, Result};
use crate::kernel::GramMatrix;

pub const CGM1_MAGIC: [u8; 4] = *b"CGM1";
pub const CGH1_MAGIC: [u8; 4] = *b"CGH1";

/// The literal content of a CGM1 file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCgm1 {
    pub n: u32,
    pub d: u32,
    pub features: Vec<f32>,
    pub labels: Vec<i32>,
}

impl RawCgm1 {
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        let n = u32::try_from(ds.n())
            .map_err(|_| DatasetError::DimensionOverflow { n: ds.n() as u64, d: ds.d() as u64 })?;
        let d = u32::try_from(ds.d())
            .map_err(|_| DatasetError::DimensionOverflow { n: ds.n() as u64, d: ds.d() as u64 })?;
        let labels = ds
            .labels()
            .iter()
            .map(|&l| i32::try_from(l).map_err(|_| DatasetError::Format(format!("label {l} exceeds i32"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n,
            d,
            features: ds.features().iter().map(|&x| x as f32).collect(),
            labels,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.features.len() + 4 * self.labels.len());
        out.extend_from_slice(&CGM1_MAGIC);
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.d.to_le_bytes());
        for x in &self.features {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for l in &self.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(DatasetError::Truncated { expected: 12, found: bytes.len() });
        }
        if bytes[..4] != CGM1_MAGIC {
            return Err(DatasetError::Format(format!("bad magic {:02X?}", &bytes[..4])));
        }
        let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let overflow = DatasetError::DimensionOverflow { n: n.into(), d: d.into() };
        let cells = (n as usize).checked_mul(d as usize).ok_or(overflow)?;
        let expected = cells
            .checked_add(n as usize)
            .and_then(|c| c.checked_mul(4))
            .and_then(|c| c.checked_add(12))
            .ok_or(DatasetError::DimensionOverflow { n: n.into(), d: d.into() })?;
        if bytes.len() < expected {
            return Err(DatasetError::Truncated { expected, found: bytes.len() });
        }
        if bytes.len() > expected {
            return Err(DatasetError::Format(format!(
                "{} trailing bytes after payload",
                bytes.len() - expected
            )));
        }
        let body = &bytes[12..];
        let (feat_bytes, label_bytes) = body.split_at(cells * 4);
        let features = feat_bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let labels = label_bytes
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { n, d, features, labels })
    }

    pub fn into_dataset(self) -> Result<Dataset> {
        let (n, d) = (self.n as usize, self.d as usize);
        let labels = self
            .labels
            .iter()
            .enumerate()
            .map(|(row, &l)| {
                u32::try_from(l).map_err(|_| DatasetError::BadLabel { row, value: l.to_string() })
            })
            .collect::<Result<Vec<_>>>()?;
        let features = Array2::from_shape_vec((n, d), self.features.iter().map(|&x| f64::from(x)).collect())
            .map_err(|e| DatasetError::Format(e.to_string()))?;
        Dataset::new(features, labels)
    }
}

pub fn dataset_to_bytes(ds: &Dataset) -> Result<Vec<u8>> {
    Ok(RawCgm1::from_dataset(ds)?.to_bytes())
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<Dataset> {
    RawCgm1::from_bytes(bytes)?.into_dataset()
}

pub fn save_binary(ds: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, dataset_to_bytes(ds)?).map_err(|e| io_err(path, e))
}

pub fn load_binary(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    dataset_from_bytes(&bytes)
}

pub fn gram_to_bytes(h: &GramMatrix) -> Vec<u8> {
    let m = h.size();
    let mut out = Vec::with_capacity(8 + 8 * m * m);
    out.extend_from_slice(&CGH1_MAGIC);
    out.extend_from_slice(&(m as u32).to_le_bytes());
    for x in h.entries() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn gram_from_bytes(bytes: &[u8]) -> Result<GramMatrix> {
    if bytes.len() < 8 {
        return Err(DatasetError::Truncated { expected: 8, found: bytes.len() });
    }
    if bytes[..4] != CGH1_MAGIC {
        return Err(DatasetError::Format(format!("bad magic {:02X?}", &bytes[..4])));
    }
    let m = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let expected = m
        .checked_mul(m)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(8))
        .ok_or(DatasetError::DimensionOverflow { n: m as u64, d: m as u64 })?;
    if bytes.len() != expected {
        return Err(DatasetError::Truncated { expected, found: bytes.len() });
    }
    let entries: Vec<f64> = bytes[8..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let entries = Array2::from_shape_vec((m, m), entries).map_err(|e| DatasetError::Format(e.to_string()))?;
    GramMatrix::from_matrix(entries).map_err(|e| DatasetError::Format(e.to_string()))
}
