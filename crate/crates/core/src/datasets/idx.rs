//! IDX tensors (the MNIST container): `0 0 type ndim`, then `ndim`
//! big-endian `u32` sizes, then the payload. Only unsigned-byte payloads
//! (`type == 0x08`) are supported.

use std::path::Path;

use super::{LabeledDataset, ShiftDescriptor};
use crate::error::{shape_err, Error, Result};
use crate::nn::Matrix;

const U8_TYPE: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::NotIdx("bad magic".into()));
    }
    if bytes[2] != U8_TYPE {
        return Err(Error::NotIdx(format!("unsupported element type 0x{:02x}", bytes[2])));
    }
    let ndim = bytes[3] as usize;
    let header = 4 + 4 * ndim;
    if ndim == 0 || bytes.len() < header {
        return Err(Error::NotIdx("truncated dimension header".into()));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let expected: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(Error::NotIdx(format!(
            "payload has {} bytes, header promises {expected}",
            payload.len()
        )));
    }
    Ok(IdxTensor {
        dims,
        data: payload.to_vec(),
    })
}

pub fn write_idx(t: &IdxTensor) -> Vec<u8> {
    let mut out = vec![0, 0, U8_TYPE, t.dims.len() as u8];
    for d in &t.dims {
        out.extend_from_slice(&(*d as u32).to_be_bytes());
    }
    out.extend_from_slice(&t.data);
    out
}

pub fn read_idx_file(path: &Path) -> Result<IdxTensor> {
    parse_idx(&std::fs::read(path)?)
}

/// Images flattened to `rows·cols` features scaled to `[0, 1]`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let images = read_idx_file(images_path)?;
    let labels = read_idx_file(labels_path)?;
    if images.dims.len() != 3 {
        return Err(Error::NotIdx(format!("image tensor has {} dims, expected 3", images.dims.len())));
    }
    if labels.dims.len() != 1 {
        return Err(Error::NotIdx(format!("label tensor has {} dims, expected 1", labels.dims.len())));
    }
    let n = images.dims[0];
    if labels.dims[0] != n {
        return Err(shape_err("load_idx", format!("{n} labels"), labels.dims[0]));
    }
    let d = images.dims[1] * images.dims[2];
    let features = Matrix::new(n, d, images.data.iter().map(|&p| p as f64 / 255.0).collect())?;
    let labels: Vec<usize> = labels.data.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().copied().max().map_or(2, |m| (m + 1).max(2));
    LabeledDataset::new(features, labels, classes)
}

/// Rotates each `rows × cols` image about its centre (nearest neighbour,
/// zero fill).
pub fn rotate_images(
    data: &LabeledDataset,
    rows: usize,
    cols: usize,
    radians: f64,
) -> Result<(LabeledDataset, ShiftDescriptor)> {
    if data.dim() != rows * cols {
        return Err(shape_err("rotate_images", rows * cols, data.dim()));
    }
    let (s, c) = radians.sin_cos();
    let (cy, cx) = ((rows as f64 - 1.0) / 2.0, (cols as f64 - 1.0) / 2.0);
    let mut out = Matrix::zeros(data.len(), data.dim());
    for (i, img) in data.features().iter_rows().enumerate() {
        let dst = out.row_mut(i);
        for y in 0..rows {
            for x in 0..cols {
                // inverse map destination pixel to source
                let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                let sx = (c * dx + s * dy + cx).round();
                let sy = (-s * dx + c * dy + cy).round();
                if sx >= 0.0 && sy >= 0.0 && (sx as usize) < cols && (sy as usize) < rows {
                    dst[y * cols + x] = img[sy as usize * cols + sx as usize];
                }
            }
        }
    }
    Ok((
        LabeledDataset::new(out, data.labels().to_vec(), data.classes())?,
        ShiftDescriptor::ImageRotation { radians },
    ))
}
