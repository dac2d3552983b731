//! CIFAR-10 binary batches: 3073-byte records of 1 label byte plus
//! channel-planar 32x32 RGB pixels.

use crate::error::{CliError, Result};
use optg_core::data::{Dataset, NormStats};
use optg_core::tensor::Tensor;
use std::fs;
use std::path::Path;

pub const RECORD_BYTES: usize = 3073;
pub const IMAGE_BYTES: usize = 3072;
pub const CLASSES: usize = 10;

/// Conventional per-channel statistics for CIFAR-10 in [0,1] scale.
pub const MEAN: [f64; 3] = [0.4914, 0.4822, 0.4465];
pub const STD: [f64; 3] = [0.2470, 0.2435, 0.2616];

/// Raw records from one batch file: `(labels, pixels)` with pixels
/// channel-planar per record.
pub fn read_batch(path: &Path) -> Result<(Vec<u8>, Vec<u8>)> {
    let buf = fs::read(path).map_err(|e| CliError::io(path, e))?;
    if buf.len() % RECORD_BYTES != 0 {
        return Err(CliError::format(
            path,
            format!(
                "file size {} is not a multiple of the {RECORD_BYTES}-byte record",
                buf.len()
            ),
        ));
    }
    let n = buf.len() / RECORD_BYTES;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * IMAGE_BYTES);
    for (i, record) in buf.chunks_exact(RECORD_BYTES).enumerate() {
        let label = record[0];
        if label as usize >= CLASSES {
            return Err(CliError::format(
                path,
                format!(
                    "label {label} at offset {} out of range for {CLASSES} classes",
                    i * RECORD_BYTES
                ),
            ));
        }
        labels.push(label);
        pixels.extend_from_slice(&record[1..]);
    }
    Ok((labels, pixels))
}

pub fn write_batch(path: &Path, labels: &[u8], pixels: &[u8]) -> Result<()> {
    if pixels.len() != labels.len() * IMAGE_BYTES {
        return Err(CliError::format(
            path,
            format!(
                "{} pixel bytes for {} labels, expected {}",
                pixels.len(),
                labels.len(),
                labels.len() * IMAGE_BYTES
            ),
        ));
    }
    let mut out = Vec::with_capacity(labels.len() * RECORD_BYTES);
    for (i, &label) in labels.iter().enumerate() {
        out.push(label);
        out.extend_from_slice(&pixels[i * IMAGE_BYTES..(i + 1) * IMAGE_BYTES]);
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

fn standardize(labels: Vec<u8>, pixels: Vec<u8>, split: &str) -> Result<Dataset> {
    let n = labels.len();
    let mut data = Vec::with_capacity(n * IMAGE_BYTES);
    for record in pixels.chunks_exact(IMAGE_BYTES) {
        for (c, plane) in record.chunks_exact(1024).enumerate() {
            for &p in plane {
                data.push((p as f64 / 255.0 - MEAN[c]) / STD[c]);
            }
        }
    }
    let tensor = Tensor::new(vec![n, 3, 32, 32], data)
        .map_err(|e| CliError::config(format!("cifar tensor: {e}")))?;
    let mut ds = Dataset::new(
        tensor,
        labels.iter().map(|&l| l as usize).collect(),
        CLASSES,
        split,
    )
    .map_err(|e| CliError::config(format!("cifar labels: {e}")))?;
    ds.normalization = Some(NormStats {
        mean: MEAN.to_vec(),
        std: STD.to_vec(),
    });
    Ok(ds)
}

/// Loads and standardizes a list of batch files as one split.
pub fn load_files(paths: &[std::path::PathBuf], split: &str) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut pixels = Vec::new();
    for p in paths {
        let (l, px) = read_batch(p)?;
        labels.extend(l);
        pixels.extend(px);
    }
    standardize(labels, pixels, split)
}

/// Conventional layout: `data_batch_1.bin` .. `data_batch_5.bin` plus
/// `test_batch.bin` under `dir`. Missing training batches beyond the first
/// are tolerated so reduced corpora keep the same naming.
pub fn load_dir(dir: &Path, train_limit: usize, eval_limit: usize) -> Result<(Dataset, Dataset)> {
    let mut train_files = Vec::new();
    for i in 1..=5 {
        let p = dir.join(format!("data_batch_{i}.bin"));
        if p.exists() {
            train_files.push(p);
        }
    }
    if train_files.is_empty() {
        return Err(CliError::io(
            dir.join("data_batch_1.bin"),
            std::io::Error::new(std::io::ErrorKind::NotFound, "no data_batch_*.bin found"),
        ));
    }
    let train = load_files(&train_files, "train")?.truncated(train_limit);
    let test = load_files(&[dir.join("test_batch.bin")], "eval")?.truncated(eval_limit);
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::temp_dir;

    #[test]
    fn single_record_round_trip_and_scaling() {
        let dir = temp_dir("cifar-one");
        let p = dir.join("b.bin");
        write_batch(&p, &[7], &[255u8; IMAGE_BYTES]).unwrap();
        let (labels, pixels) = read_batch(&p).unwrap();
        assert_eq!(labels, vec![7]);
        assert!(pixels.iter().all(|&v| v == 255));
        let ds = standardize(labels, pixels, "train").unwrap();
        assert_eq!(ds.labels, vec![7]);
        // all-ones pre-standardization
        for c in 0..3 {
            let expect = (1.0 - MEAN[c]) / STD[c];
            let plane = &ds.inputs.data()[c * 1024..(c + 1) * 1024];
            assert!(plane.iter().all(|&v| (v - expect).abs() < 1e-12));
        }
    }

    #[test]
    fn zero_length_file_is_empty_dataset() {
        let dir = temp_dir("cifar-empty");
        let p = dir.join("b.bin");
        std::fs::write(&p, []).unwrap();
        let (labels, pixels) = read_batch(&p).unwrap();
        let ds = standardize(labels, pixels, "train").unwrap();
        assert_eq!(ds.len(), 0);
    }

    #[test]
    fn bad_record_size_is_format_error() {
        let dir = temp_dir("cifar-size");
        let p = dir.join("b.bin");
        std::fs::write(&p, vec![0u8; RECORD_BYTES + 1]).unwrap();
        assert!(matches!(read_batch(&p), Err(CliError::Format { .. })));
    }

    #[test]
    fn label_out_of_range_is_format_error() {
        let dir = temp_dir("cifar-label");
        let p = dir.join("b.bin");
        let mut rec = vec![0u8; RECORD_BYTES];
        rec[0] = 10;
        std::fs::write(&p, rec).unwrap();
        match read_batch(&p) {
            Err(CliError::Format { message, .. }) => {
                assert!(message.contains("label 10"), "{message}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
