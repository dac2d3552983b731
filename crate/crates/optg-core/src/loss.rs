//! Softmax cross-entropy, mean over the batch, with its exact gradient.

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;
use alloc::vec;

/// Returns `(loss, dL/dlogits)` for logits `[N, K]` and integer labels.
///
/// Log-sum-exp is max-shifted, so arbitrarily large logits stay finite.
/// The gradient is `(softmax - onehot) / N`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let &[n, k] = logits.shape() else {
        return Err(Error::dimension("logits must be [N, K]"));
    };
    if labels.len() != n {
        return Err(Error::dimension(format_args!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    if n == 0 {
        return Err(Error::input("empty batch"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::input(format_args!(
            "label {bad} out of range for {k} classes"
        )));
    }

    let inv_n = 1.0 / n as f64;
    let mut grad = vec![0.0; n * k];
    let mut loss = 0.0;
    for (i, (row, &label)) in logits.data().chunks_exact(k).zip(labels).enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &v in row {
            denom += math::exp(v - max);
        }
        loss += (math::ln(denom) + max - row[label]) * inv_n;
        let g_row = &mut grad[i * k..(i + 1) * k];
        for (g, &v) in g_row.iter_mut().zip(row) {
            *g = math::exp(v - max) / denom * inv_n;
        }
        g_row[label] -= inv_n;
    }
    Ok((loss, Tensor::new(vec![n, k], grad)?))
}

/// Row-wise argmax of logits; ties resolve to the lowest class index.
pub fn argmax_rows(logits: &Tensor) -> Result<alloc::vec::Vec<usize>> {
    let &[_, k] = logits.shape() else {
        return Err(Error::dimension("logits must be [N, K]"));
    };
    Ok(logits
        .data()
        .chunks_exact(k)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}
