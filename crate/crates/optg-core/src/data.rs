//! In-memory datasets, seeded batch iteration, and the synthetic blobs task.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Declared normalization applied to the stored inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// A labelled dataset with inputs `[N, ..sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: String,
    pub normalization: Option<NormStats>,
}

impl Dataset {
    pub fn new(
        inputs: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        split: impl Into<String>,
    ) -> Result<Self> {
        let n = inputs.shape().first().copied().unwrap_or(0);
        if labels.len() != n {
            return Err(Error::dimension(format_args!(
                "{} labels for {n} samples",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::input(format_args!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Dataset {
            inputs,
            labels,
            num_classes,
            split: split.into(),
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample shape (without the leading N axis).
    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape().iter().product()
    }

    /// Gathers the given rows into a batch tensor plus its labels.
    pub fn batch(&self, indices: &[u32]) -> Result<(Tensor, Vec<usize>)> {
        let stride = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * stride);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let i = i as usize;
            if i >= self.len() {
                return Err(Error::input(format_args!("index {i} out of range")));
            }
            data.extend_from_slice(&self.inputs.data()[i * stride..(i + 1) * stride]);
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.sample_shape());
        Ok((Tensor::new(shape, data)?, labels))
    }

    /// First `limit` samples (a deterministic subset flag for desk-scale
    /// runs); `limit == 0` keeps everything.
    pub fn truncated(mut self, limit: usize) -> Self {
        if limit == 0 || limit >= self.len() {
            return self;
        }
        let stride = self.sample_len();
        let mut shape = self.inputs.shape().to_vec();
        shape[0] = limit;
        let data = self.inputs.data()[..limit * stride].to_vec();
        self.inputs = Tensor::new(shape, data).unwrap();
        self.labels.truncate(limit);
        self
    }
}

/// Yields seeded per-epoch permutations of `0..n` in `batch_size` chunks.
/// The permutation depends only on `(seed, epoch)`, so any epoch can be
/// replayed without running its predecessors.
#[derive(Debug, Clone)]
pub struct BatchIterator {
    perm: Vec<u32>,
    batch_size: usize,
    cursor: usize,
}

impl BatchIterator {
    pub fn new(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        let mut rng = Rng::derive(seed, 0x5u64, epoch);
        Ok(BatchIterator {
            perm: rng.permutation(n),
            batch_size,
            cursor: 0,
        })
    }

    /// Next batch of indices; the final batch may be short.
    pub fn next_batch(&mut self) -> Option<&[u32]> {
        if self.cursor >= self.perm.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.perm.len());
        let out = &self.perm[self.cursor..end];
        self.cursor = end;
        Some(out)
    }

    pub fn num_batches(&self) -> usize {
        self.perm.len().div_ceil(self.batch_size)
    }
}

/// Gaussian blobs around explicit class means; unit-variance noise.
pub fn blobs_with_means(means: &[Vec<f64>], per_class: usize, seed: u64) -> Result<Dataset> {
    let classes = means.len();
    if classes < 2 {
        return Err(Error::config("blobs need at least two classes"));
    }
    let dim = means[0].len();
    if means.iter().any(|m| m.len() != dim) {
        return Err(Error::dimension("ragged class means"));
    }
    let n = classes * per_class;
    let mut rng = Rng::derive(seed, 0xb10b5, 0);
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        for d in 0..dim {
            data.push(means[c][d] + rng.normal());
        }
        labels.push(c);
    }
    Dataset::new(Tensor::new(vec![n, dim], data)?, labels, classes, "train")
}

/// Seeded synthetic classification task: class means drawn on a random
/// simplex-like spread (expected pairwise distance ~ `spread`), unit-variance
/// Gaussian samples, labels balanced round-robin.
pub fn synthetic_blobs(
    seed: u64,
    n: usize,
    classes: usize,
    dim: usize,
    spread: f64,
) -> Result<Dataset> {
    synthetic_blobs_split(seed, 0, n, classes, dim, spread)
}

/// Like [`synthetic_blobs`], but `split` selects an independent sample
/// stream over the same class means, so train/test splits describe one task.
pub fn synthetic_blobs_split(
    seed: u64,
    split: u64,
    n: usize,
    classes: usize,
    dim: usize,
    spread: f64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::config("blobs need at least two classes"));
    }
    if dim == 0 {
        return Err(Error::config("dimension must be positive"));
    }
    let mut means_rng = Rng::derive(seed, 0xc1a55, 0);
    let scale = spread / crate::math::sqrt(2.0 * dim as f64);
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| scale * means_rng.normal()).collect())
        .collect();
    let mut rng = Rng::derive(seed, 0x5a8713, split);
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        for d in 0..dim {
            data.push(means[c][d] + rng.normal());
        }
        labels.push(c);
    }
    let tag = if split == 0 { "train" } else { "eval" };
    Dataset::new(Tensor::new(vec![n, dim], data)?, labels, classes, tag)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_dataset() {
        let a = synthetic_blobs(9, 64, 4, 8, 6.0).unwrap();
        let b = synthetic_blobs(9, 64, 4, 8, 6.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_dataset() {
        let d = synthetic_blobs(1, 0, 3, 4, 5.0).unwrap();
        assert_eq!(d.len(), 0);
        assert!(d.is_empty());
    }

    #[test]
    fn iterator_visits_every_index_once() {
        let mut it = BatchIterator::new(103, 16, 5, 2).unwrap();
        let mut seen = vec![0u8; 103];
        while let Some(batch) = it.next_batch() {
            for &i in batch {
                seen[i as usize] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(it.num_batches(), 7);
    }

    #[test]
    fn permutation_depends_on_seed_and_epoch() {
        let a = BatchIterator::new(50, 10, 1, 0).unwrap();
        let b = BatchIterator::new(50, 10, 1, 0).unwrap();
        let c = BatchIterator::new(50, 10, 1, 1).unwrap();
        let d = BatchIterator::new(50, 10, 2, 0).unwrap();
        assert_eq!(a.perm, b.perm);
        assert_ne!(a.perm, c.perm);
        assert_ne!(a.perm, d.perm);
    }

    #[test]
    fn batch_gathers_rows() {
        let d = Dataset::new(
            Tensor::new(vec![3, 2], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(),
            vec![0, 1, 0],
            2,
            "train",
        )
        .unwrap();
        let (x, y) = d.batch(&[2, 0]).unwrap();
        assert_eq!(x.data(), &[4.0, 5.0, 0.0, 1.0]);
        assert_eq!(y, vec![0, 0]);
    }

    #[test]
    fn label_out_of_range_rejected() {
        let r = Dataset::new(Tensor::zeros(vec![2, 2]), vec![0, 5], 3, "train");
        assert!(matches!(r, Err(Error::Input(_))));
    }

    #[test]
    fn truncation_keeps_prefix() {
        let d = synthetic_blobs(4, 100, 4, 3, 5.0).unwrap();
        let t = d.clone().truncated(10);
        assert_eq!(t.len(), 10);
        assert_eq!(&d.inputs.data()[..30], t.inputs.data());
    }
}
