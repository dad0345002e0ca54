//! Little-endian binary formats for coordinate maps (`CMAP`) and
//! correspondence sets (`CSET`).
//!
//! `CMAP` v1: magic, `u32` version, `u32` width, `u32` height, then
//! `width·height` mask bytes (row-major), then `width·height·3` front `f32`
//! values, then the same for back. Unmasked pixels hold quiet NaN.
//!
//! `CSET` v1: magic, `u32` version, `u64` record count, then per record
//! pixel `2×f64`, point `3×f64`, source `u8` (0 front, 1 back, 2 mid) and
//! group `u32`.

use std::fs;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use super::ExperimentError;
use crate::correspondence::{Correspondence, CorrespondenceSet, Source};
use crate::CoordinateMap;

pub const CMAP_MAGIC: [u8; 4] = *b"CMAP";
pub const CSET_MAGIC: [u8; 4] = *b"CSET";
pub const FORMAT_VERSION: u32 = 1;

const CSET_RECORD_BYTES: usize = 2 * 8 + 3 * 8 + 1 + 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported {format} version {found} (this build reads version {supported})")]
    UnsupportedVersion { format: &'static str, found: u32, supported: u32 },
    #[error("truncated {format} file: {section} needs {needed} bytes but only {available} remain")]
    Truncated { format: &'static str, section: &'static str, needed: usize, available: usize },
    #[error("{0} trailing bytes after the last section")]
    TrailingBytes(usize),
    #[error("invalid {format} content: {message}")]
    Invalid { format: &'static str, message: String },
}

struct Reader<'a> {
    format: &'static str,
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, section: &'static str) -> Result<&'a [u8], FormatError> {
        let available = self.data.len() - self.pos;
        if n > available {
            return Err(FormatError::Truncated { format: self.format, section, needed: n, available });
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, section: &'static str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, section: &'static str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8, section)?.try_into().expect("8 bytes")))
    }

    fn header(&mut self, magic: [u8; 4]) -> Result<(), FormatError> {
        let found = self.take(4, "magic")?;
        if found != magic {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(&magic).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        let version = self.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(FormatError::UnsupportedVersion {
                format: self.format,
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        Ok(())
    }

    fn finish(&self) -> Result<(), FormatError> {
        match self.data.len() - self.pos {
            0 => Ok(()),
            n => Err(FormatError::TrailingBytes(n)),
        }
    }
}

pub fn encode_cmap(map: &CoordinateMap) -> Vec<u8> {
    let n = map.len();
    let mut out = Vec::with_capacity(16 + n + 24 * n);
    out.extend_from_slice(&CMAP_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&map.width().to_le_bytes());
    out.extend_from_slice(&map.height().to_le_bytes());
    out.extend_from_slice(map.mask());
    for surface in [map.front_raw(), map.back_raw()] {
        for v in surface.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_cmap(data: &[u8]) -> Result<CoordinateMap, FormatError> {
    let mut r = Reader { format: "CMAP", data, pos: 0 };
    r.header(CMAP_MAGIC)?;
    let width = r.u32("width")?;
    let height = r.u32("height")?;
    let n = width as usize * height as usize;
    let mask = r.take(n, "mask")?.to_vec();
    let mut surface = |section| -> Result<Vec<[f32; 3]>, FormatError> {
        let bytes = r.take(n * 12, section)?;
        Ok(bytes
            .chunks_exact(12)
            .map(|c| std::array::from_fn(|k| f32::from_le_bytes(c[4 * k..4 * k + 4].try_into().expect("4 bytes"))))
            .collect())
    };
    let front = surface("front")?;
    let back = surface("back")?;
    r.finish()?;
    let map = CoordinateMap::from_raw(width, height, mask, front, back).expect("lengths match header");
    if !map.is_valid() {
        return Err(FormatError::Invalid { format: "CMAP", message: "masked pixel with non-finite coordinate".into() });
    }
    Ok(map)
}

pub fn encode_cset(set: &CorrespondenceSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + set.len() * CSET_RECORD_BYTES);
    out.extend_from_slice(&CSET_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(set.len() as u64).to_le_bytes());
    for r in set.records() {
        for v in r.pixel.iter().chain(r.point.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(r.source.code());
        out.extend_from_slice(&r.group.to_le_bytes());
    }
    out
}

pub fn decode_cset(data: &[u8]) -> Result<CorrespondenceSet, FormatError> {
    let mut r = Reader { format: "CSET", data, pos: 0 };
    r.header(CSET_MAGIC)?;
    let count = r.u64("record count")?;
    let available = data.len() - r.pos;
    let needed = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(CSET_RECORD_BYTES))
        .unwrap_or(usize::MAX);
    if needed > available {
        return Err(FormatError::Truncated { format: "CSET", section: "records", needed, available });
    }
    let mut records = Vec::with_capacity(count as usize);
    for chunk in r.take(needed, "records")?.chunks_exact(CSET_RECORD_BYTES) {
        let f = |k: usize| f64::from_le_bytes(chunk[8 * k..8 * k + 8].try_into().expect("8 bytes"));
        let code = chunk[40];
        let source = Source::from_code(code)
            .ok_or_else(|| FormatError::Invalid { format: "CSET", message: format!("unknown source code {code}") })?;
        records.push(Correspondence {
            pixel: Vector2::new(f(0), f(1)),
            point: Vector3::new(f(2), f(3), f(4)),
            source,
            group: u32::from_le_bytes(chunk[41..45].try_into().expect("4 bytes")),
        });
    }
    r.finish()?;
    Ok(CorrespondenceSet::new(records))
}

fn read(path: &Path) -> Result<Vec<u8>, ExperimentError> {
    fs::read(path).map_err(|e| ExperimentError::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    fs::write(path, bytes).map_err(|e| ExperimentError::io(path, e))
}

pub fn save_cmap(path: impl AsRef<Path>, map: &CoordinateMap) -> Result<(), ExperimentError> {
    write(path.as_ref(), &encode_cmap(map))
}

pub fn load_cmap(path: impl AsRef<Path>) -> Result<CoordinateMap, ExperimentError> {
    Ok(decode_cmap(&read(path.as_ref())?)?)
}

pub fn save_cset(path: impl AsRef<Path>, set: &CorrespondenceSet) -> Result<(), ExperimentError> {
    write(path.as_ref(), &encode_cset(set))
}

pub fn load_cset(path: impl AsRef<Path>) -> Result<CorrespondenceSet, ExperimentError> {
    Ok(decode_cset(&read(path.as_ref())?)?)
}
