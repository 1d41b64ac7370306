//! IDX (MNIST-style) files: big-endian `u32` magic, big-endian `u32`
//! dimensions, then raw `u8` payload.

use std::io::Write;
use std::path::Path;

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))
}

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            offset: offset as u64,
            message: format!("truncated while reading {what}"),
        })
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let magic = be_u32(bytes, 0, "magic number")?;
    if magic != expected {
        return Err(Error::Format {
            offset: 0,
            message: format!("{what}: magic 0x{magic:08x}, expected 0x{expected:08x}"),
        });
    }
    Ok(())
}

/// Parses an images/labels pair. Pixels are scaled to `[0, 1]`; features have
/// shape `n×1×rows×cols`. `classes` defaults to `max(label) + 1` (at least 2).
pub fn parse_idx(images: &[u8], labels: &[u8], classes: Option<usize>) -> Result<Dataset> {
    check_magic(images, IMAGES_MAGIC, "images")?;
    check_magic(labels, LABELS_MAGIC, "labels")?;
    let n = be_u32(images, 4, "image count")? as usize;
    let rows = be_u32(images, 8, "row count")? as usize;
    let cols = be_u32(images, 12, "column count")? as usize;
    let n_labels = be_u32(labels, 4, "label count")? as usize;
    if n != n_labels {
        return Err(Error::Format {
            offset: 4,
            message: format!("{n} images but {n_labels} labels"),
        });
    }
    if n == 0 || rows == 0 || cols == 0 {
        return Err(Error::Format {
            offset: 4,
            message: format!("empty image set ({n}×{rows}×{cols})"),
        });
    }
    let pixels = n * rows * cols;
    let need = 16 + pixels;
    if images.len() < need {
        return Err(Error::Format {
            offset: images.len() as u64,
            message: format!("image payload truncated: need {need} bytes"),
        });
    }
    if labels.len() < 8 + n {
        return Err(Error::Format {
            offset: labels.len() as u64,
            message: format!("label payload truncated: need {} bytes", 8 + n),
        });
    }
    let data = images[16..need].iter().map(|&b| b as f64 / 255.0).collect();
    let label_vec: Vec<usize> = labels[8..8 + n].iter().map(|&b| b as usize).collect();
    let max_label = label_vec.iter().copied().max().unwrap_or(0);
    let classes = classes.unwrap_or((max_label + 1).max(2));
    Dataset::new(Tensor::new(vec![n, 1, rows, cols], data)?, label_vec, classes)
}

pub fn load_idx(images_path: &Path, labels_path: &Path, classes: Option<usize>) -> Result<Dataset> {
    let images = read_file(images_path)?;
    let labels = read_file(labels_path)?;
    parse_idx(&images, &labels, classes)
}

/// Encodes `n` images of `rows×cols` bytes.
pub fn encode_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let n = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    for v in [LABELS_MAGIC, labels.len() as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(labels);
    out
}

/// Writes an images/labels pair.
pub fn write_idx(images_path: &Path, labels_path: &Path, rows: usize, cols: usize, pixels: &[u8], labels: &[u8]) -> Result<()> {
    let write = |path: &Path, bytes: Vec<u8>| {
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| Error::io(path, e))
    };
    write(images_path, encode_images(rows, cols, pixels))?;
    write(labels_path, encode_labels(labels))
}
