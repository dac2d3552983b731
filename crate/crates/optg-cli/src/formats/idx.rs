//! IDX image/label files (big-endian headers, u8 payloads), as used by the
//! classic handwritten-digit corpus.

use crate::error::{CliError, Result};
use optg_core::data::{Dataset, NormStats};
use optg_core::tensor::Tensor;
use std::fs;
use std::io::Write;
use std::path::Path;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Conventional normalization statistics for 28x28 digit images.
pub const MEAN: f64 = 0.1307;
pub const STD: f64 = 0.3081;

fn read_u32(buf: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if buf.len() < end {
        return Err(CliError::format(
            path,
            format!("truncated at offset {offset}: need 4 header bytes"),
        ));
    }
    Ok(u32::from_be_bytes([buf[offset], buf[offset + 1], buf[offset + 2], buf[offset + 3]]))
}

/// Raw images: `(count, rows, cols, pixels)`.
pub fn read_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let buf = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let magic = read_u32(&buf, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(CliError::format(
            path,
            format!("bad image magic {magic:#010x} at offset 0, expected {IMAGE_MAGIC:#010x}"),
        ));
    }
    let count = read_u32(&buf, 4, path)? as usize;
    let rows = read_u32(&buf, 8, path)? as usize;
    let cols = read_u32(&buf, 12, path)? as usize;
    let expected = 16 + count * rows * cols;
    if buf.len() != expected {
        return Err(CliError::format(
            path,
            format!(
                "payload length {} at offset 16, expected {} for {count} images of {rows}x{cols}",
                buf.len() - 16,
                expected - 16
            ),
        ));
    }
    Ok((count, rows, cols, buf[16..].to_vec()))
}

/// Raw labels: one byte each.
pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let buf = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let magic = read_u32(&buf, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(CliError::format(
            path,
            format!("bad label magic {magic:#010x} at offset 0, expected {LABEL_MAGIC:#010x}"),
        ));
    }
    let count = read_u32(&buf, 4, path)? as usize;
    if buf.len() != 8 + count {
        return Err(CliError::format(
            path,
            format!("payload length {} at offset 8, expected {count}", buf.len() - 8),
        ));
    }
    Ok(buf[8..].to_vec())
}

pub fn write_images(path: &Path, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let count = if rows * cols == 0 { 0 } else { pixels.len() / (rows * cols) };
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(count as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend_from_slice(pixels);
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(&out).map_err(|e| CliError::io(path, e))
}

pub fn write_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(&out).map_err(|e| CliError::io(path, e))
}

/// One split (image file + label file) as a standardized dataset of
/// `[N, 1, rows, cols]` tensors: pixels scaled to [0,1], then `(x-mean)/std`.
pub fn load_split(images: &Path, labels: &Path, split: &str) -> Result<Dataset> {
    let (count, rows, cols, pixels) = read_images(images)?;
    let raw_labels = read_labels(labels)?;
    if raw_labels.len() != count {
        return Err(CliError::format(
            labels,
            format!("{} labels for {count} images", raw_labels.len()),
        ));
    }
    let data: Vec<f64> = pixels
        .iter()
        .map(|&p| (p as f64 / 255.0 - MEAN) / STD)
        .collect();
    let tensor = Tensor::new(vec![count, 1, rows, cols], data)
        .map_err(|e| CliError::format(images, e))?;
    let label_vec: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
    let classes = label_vec.iter().max().map_or(10, |&m| (m + 1).max(10));
    let mut ds = Dataset::new(tensor, label_vec, classes, split)
        .map_err(|e| CliError::format(labels, e))?;
    ds.normalization = Some(NormStats {
        mean: vec![MEAN],
        std: vec![STD],
    });
    Ok(ds)
}

/// Conventional file names: `train-images-idx3-ubyte` etc. under `dir`.
pub fn load_dir(dir: &Path, train_limit: usize, eval_limit: usize) -> Result<(Dataset, Dataset)> {
    let train = load_split(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
        "train",
    )?
    .truncated(train_limit);
    let test = load_split(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
        "eval",
    )?
    .truncated(eval_limit);
    Ok((train, test))
}
