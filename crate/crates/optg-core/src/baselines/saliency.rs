//! Per-weight importance scores and one-shot pruning from them.

use crate::error::{Error, Result};
use crate::masking::binarize_by_scores;
use crate::math;
use crate::tensor::Tensor;
use crate::trainer::SparseModel;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaliencyCriterion {
    /// `|dL/dw ⊙ w|` from one forward/backward on a dense model.
    FirstOrderAbs,
    /// `|w ⊙ m|`: plain magnitude of the effective weights.
    Magnitude,
    /// Mask scores accumulated by supermask training.
    AccumulatedMask,
}

/// Per-prunable-layer score tensors, slot-aligned with `SparseModel::masked`.
#[derive(Debug, Clone)]
pub struct SaliencyScore {
    pub criterion: SaliencyCriterion,
    pub per_layer: Vec<Tensor>,
}

/// First-order saliency `|grad ⊙ w|` over the prunable set from a single
/// forward/backward on `(x, labels)`. Requires a fully dense mask: the
/// gradient of a pruned weight through `w ⊙ m` is zero, which would silently
/// zero its score.
pub fn first_order_saliency(
    model: &SparseModel,
    x: &Tensor,
    labels: &[usize],
) -> Result<SaliencyScore> {
    if model.masked.iter().any(|p| p.pruned_count() > 0) {
        return Err(Error::state(
            "first-order saliency requires an all-ones mask",
        ));
    }
    let (_, grads) = model.grads_on_batch(x, labels)?;
    let per_layer = model
        .masked
        .iter()
        .map(|p| {
            let g = &grads.layers[p.layer_id].as_ref().unwrap().weight;
            let data = g
                .data()
                .iter()
                .zip(p.weights.data())
                .map(|(&gi, &wi)| math::abs(gi * wi))
                .collect();
            Tensor::new(p.weights.shape().to_vec(), data).unwrap()
        })
        .collect();
    Ok(SaliencyScore {
        criterion: SaliencyCriterion::FirstOrderAbs,
        per_layer,
    })
}

/// Magnitude of the effective weights; pruned weights score exactly zero,
/// so a growing prune budget keeps them pruned.
pub fn magnitude_saliency(model: &SparseModel) -> SaliencyScore {
    let per_layer = model
        .masked
        .iter()
        .map(|p| p.effective_weights().map(math::abs))
        .collect();
    SaliencyScore {
        criterion: SaliencyCriterion::Magnitude,
        per_layer,
    }
}

/// Masks the `⌈P·N⌉` lowest-score weights globally. Same selection and
/// tie-break rule as score binarization (shared code path).
pub fn one_shot_prune(model: &mut SparseModel, scores: &SaliencyScore, p: f64) -> Result<usize> {
    binarize_by_scores(&mut model.masked, &scores.per_layer, p)
}
