//! The artifact's own dataset cache: versioned header, little-endian f64
//! payload. Reloading a saved dataset is bit-identical.

use crate::binio::{Reader, Writer};
use crate::error::{CliError, Result};
use optg_core::data::{Dataset, NormStats};
use optg_core::tensor::Tensor;
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 8] = b"OPTGDS\x00\x01";

pub fn save(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = Writer::new(MAGIC);
    w.usize_slice(ds.inputs.shape());
    for &v in ds.inputs.data() {
        w.f64(v);
    }
    w.usize_slice(&ds.labels);
    w.u64(ds.num_classes as u64);
    w.bytes(ds.split.as_bytes());
    match &ds.normalization {
        Some(stats) => {
            w.u64(1);
            w.f64_slice(&stats.mean);
            w.f64_slice(&stats.std);
        }
        None => w.u64(0),
    }
    fs::write(path, w.buf).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path) -> Result<Dataset> {
    let buf = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let mut r = Reader::new(&buf, path, MAGIC)?;
    let shape = r.usize_vec()?;
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    for _ in 0..numel {
        data.push(r.f64()?);
    }
    let labels = r.usize_vec()?;
    let num_classes = r.u64()? as usize;
    let split = String::from_utf8(r.bytes()?)
        .map_err(|e| CliError::format(path, format!("split tag not UTF-8: {e}")))?;
    let normalization = if r.u64()? == 1 {
        Some(NormStats {
            mean: r.f64_vec()?,
            std: r.f64_vec()?,
        })
    } else {
        None
    };
    r.done()?;
    let tensor = Tensor::new(shape, data).map_err(|e| CliError::format(path, e))?;
    let mut ds =
        Dataset::new(tensor, labels, num_classes, split).map_err(|e| CliError::format(path, e))?;
    ds.normalization = normalization;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::temp_dir;
    use optg_core::data::synthetic_blobs;

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = temp_dir("cache-rt");
        let p = dir.join("ds.bin");
        let mut ds = synthetic_blobs(3, 40, 4, 7, 6.0).unwrap();
        ds.normalization = Some(NormStats {
            mean: vec![0.5],
            std: vec![0.25],
        });
        save(&p, &ds).unwrap();
        let back = load(&p).unwrap();
        assert_eq!(ds, back);
        // bit-level identity of the payload
        let a: Vec<u64> = ds.inputs.data().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.inputs.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn version_mismatch_is_format_error() {
        let dir = temp_dir("cache-ver");
        let p = dir.join("ds.bin");
        std::fs::write(&p, b"OPTGDS\x00\x09rest").unwrap();
        assert!(matches!(load(&p), Err(CliError::Format { .. })));
    }
}
