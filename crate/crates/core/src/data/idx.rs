//! IDX files (the MNIST container): big-endian magic `0 0 type ndim`,
//! `ndim` big-endian u32 dimensions, then the payload.

use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub type_code: u8,
    pub data: Vec<f64>,
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format { path: path.to_owned(), msg: msg.into() }
}

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    parse_idx(&bytes).map_err(|msg| format_err(path, msg))
}

fn parse_idx(bytes: &[u8]) -> std::result::Result<IdxArray, String> {
    if bytes.len() < 4 {
        return Err("truncated header".into());
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(format!("bad magic {:02x}{:02x}", bytes[0], bytes[1]));
    }
    let type_code = bytes[2];
    let ndim = bytes[3] as usize;
    let width = match type_code {
        0x08 | 0x09 => 1,
        0x0B => 2,
        0x0C | 0x0D => 4,
        0x0E => 8,
        other => return Err(format!("unknown element type 0x{other:02x}")),
    };
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err("truncated dimension list".into());
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|k| {
            let o = 4 + 4 * k;
            u32::from_be_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize
        })
        .collect();
    let count: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() < count * width {
        return Err(format!(
            "truncated payload: header declares {count} elements, file holds {}",
            payload.len() / width
        ));
    }
    let data = payload[..count * width]
        .chunks_exact(width)
        .map(|c| match type_code {
            0x08 => f64::from(c[0]),
            0x09 => f64::from(c[0] as i8),
            0x0B => f64::from(i16::from_be_bytes([c[0], c[1]])),
            0x0C => f64::from(i32::from_be_bytes([c[0], c[1], c[2], c[3]])),
            0x0D => f64::from(f32::from_be_bytes([c[0], c[1], c[2], c[3]])),
            _ => f64::from_be_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]),
        })
        .collect();
    Ok(IdxArray { dims, type_code, data })
}

/// Images (any rank >= 1; trailing dims are flattened) plus a rank-1 label
/// file. Unsigned-byte pixels are scaled to [0, 1].
pub fn load_idx_pair(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = read_idx(images)?;
    let lab = read_idx(labels)?;
    let m = *img.dims.first().ok_or_else(|| format_err(images, "zero-rank image array"))?;
    if lab.dims.len() != 1 || lab.dims[0] != m {
        return Err(format_err(labels, format!("label array dims {:?} do not match {m} images", lab.dims)));
    }
    let dim: usize = img.dims[1..].iter().product();
    let mut features = img.data;
    if img.type_code == 0x08 {
        for x in features.iter_mut() {
            *x /= 255.0;
        }
    }
    let mut ys = Vec::with_capacity(m);
    for &l in &lab.data {
        if l < 0.0 || l.fract() != 0.0 {
            return Err(format_err(labels, format!("label {l} is not a class index")));
        }
        ys.push(l as usize);
    }
    let classes = ys.iter().max().map_or(0, |&c| c + 1);
    let name = images.file_name().map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, dim.max(1), classes, features, ys)
}
