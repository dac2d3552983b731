//! Measures how far summed per-weight loss-change predictions drift from
//! the actual loss change when many weights are removed at once.
//!
//! Per-weight saliency assumes each removal happens in isolation; removing
//! a group simultaneously breaks that assumption and the first-order
//! prediction accrues an error that grows with the group size. This module
//! quantifies that error on exact re-evaluations of the loss.

use crate::error::{Error, Result};
use crate::masking::prune_count;
use crate::math;
use crate::optim::{sgd_step_masked, SgdConfig};
use crate::tensor::Tensor;
use crate::trainer::SparseModel;
use alloc::vec;
use alloc::vec::Vec;

/// Maximum prunable-weight count for which exact group re-evaluation is
/// considered tractable.
pub const MAX_EXACT_WEIGHTS: usize = 10_000;

/// A loss whose value can be re-evaluated exactly under any prune set.
/// Implemented by the network-on-a-batch adapter and by closed-form toys in
/// tests, so the gap computation can be validated against analytic
/// remainders.
pub trait SaliencyLoss {
    fn weight_count(&self) -> usize;
    /// Flat weight values, in the same order `pruned` indexes.
    fn weights(&self) -> Vec<f64>;
    /// Loss and gradient with every weight kept.
    fn dense_loss_and_grad(&self) -> Result<(f64, Vec<f64>)>;
    /// Exact loss with the flagged weights removed.
    fn loss_with_pruned(&self, pruned: &[bool]) -> Result<f64>;
    /// Loss after removal plus `steps` of fine-tuning of the survivors;
    /// `None` when the loss has no training procedure.
    fn finetuned_loss_with_pruned(&self, pruned: &[bool], steps: usize) -> Result<Option<f64>>;
}

#[derive(Debug, Clone)]
pub struct ParadoxRow {
    pub fraction: f64,
    pub removed: usize,
    /// Sum of first-order per-weight estimates over the removed set.
    pub predicted: f64,
    /// Exact `L(group masked) - L(dense)` on the measurement batch.
    pub actual: f64,
    pub gap: f64,
    /// Same comparison after fine-tuning the survivors, when requested.
    pub actual_finetuned: Option<f64>,
    pub gap_finetuned: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ParadoxReport {
    pub dense_loss: f64,
    /// Per-weight independent loss-change estimates `-g_i w_i`.
    pub per_weight_predicted: Vec<f64>,
    pub rows: Vec<ParadoxRow>,
}

/// For each removal fraction: select the lowest-saliency weights, sum their
/// independent first-order loss-change estimates, re-evaluate the loss with
/// the whole group removed, and report the absolute gap.
pub fn measure_paradox_gap(
    loss: &impl SaliencyLoss,
    fractions: &[f64],
    finetune_steps: usize,
) -> Result<ParadoxReport> {
    let n = loss.weight_count();
    if n == 0 {
        return Err(Error::input("no prunable weights"));
    }
    if n > MAX_EXACT_WEIGHTS {
        return Err(Error::input(format_args!(
            "{n} prunable weights exceeds the exact re-evaluation bound {MAX_EXACT_WEIGHTS}"
        )));
    }
    if let Some(&bad) = fractions.iter().find(|&&f| !(0.0..1.0).contains(&f)) {
        return Err(Error::input(format_args!(
            "removal fraction {bad} must be in [0, 1)"
        )));
    }

    let (dense_loss, grad) = loss.dense_loss_and_grad()?;
    let weights = loss.weights();
    if grad.len() != n || weights.len() != n {
        return Err(Error::dimension("gradient/weight length mismatch"));
    }
    let per_weight_predicted: Vec<f64> = grad
        .iter()
        .zip(&weights)
        .map(|(&g, &w)| -(g * w))
        .collect();

    // Removal order: ascending |g w| (first-order saliency), index tie-break.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| {
        math::abs(per_weight_predicted[a])
            .total_cmp(&math::abs(per_weight_predicted[b]))
            .then_with(|| a.cmp(&b))
    });

    let mut rows = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let removed = prune_count(fraction, n);
        let mut pruned = vec![false; n];
        let mut predicted = 0.0;
        for &i in order.iter().take(removed) {
            pruned[i] = true;
            predicted += per_weight_predicted[i];
        }
        let actual = loss.loss_with_pruned(&pruned)? - dense_loss;
        let (actual_finetuned, gap_finetuned) = if finetune_steps > 0 {
            match loss.finetuned_loss_with_pruned(&pruned, finetune_steps)? {
                Some(l) => {
                    let a = l - dense_loss;
                    (Some(a), Some(math::abs(predicted - a)))
                }
                None => (None, None),
            }
        } else {
            (None, None)
        };
        rows.push(ParadoxRow {
            fraction,
            removed,
            predicted,
            actual,
            gap: math::abs(predicted - actual),
            actual_finetuned,
            gap_finetuned,
        });
    }
    Ok(ParadoxReport {
        dense_loss,
        per_weight_predicted,
        rows,
    })
}

/// Fine-tuning procedure for the post-removal loss: full-batch SGD steps on
/// the measurement batch.
#[derive(Debug, Clone, Copy)]
pub struct ParadoxFineTune {
    pub lr: f64,
    pub momentum: f64,
}

impl Default for ParadoxFineTune {
    fn default() -> Self {
        ParadoxFineTune {
            lr: 0.05,
            momentum: 0.9,
        }
    }
}

/// Adapter: a sparse model evaluated on one fixed batch. Holding the batch
/// fixed removes data noise from the gap; every loss evaluation sees the
/// same examples.
pub struct NetworkBatchLoss<'a> {
    pub model: &'a SparseModel,
    pub x: &'a Tensor,
    pub labels: &'a [usize],
    pub finetune: ParadoxFineTune,
}

impl<'a> NetworkBatchLoss<'a> {
    pub fn new(model: &'a SparseModel, x: &'a Tensor, labels: &'a [usize]) -> Result<Self> {
        if model.masked.iter().any(|p| p.pruned_count() > 0) {
            return Err(Error::state(
                "paradox measurement starts from an all-ones mask",
            ));
        }
        Ok(NetworkBatchLoss {
            model,
            x,
            labels,
            finetune: ParadoxFineTune::default(),
        })
    }

    fn with_pruned(&self, pruned: &[bool]) -> SparseModel {
        let mut m = self.model.clone();
        let mut offset = 0;
        for p in &mut m.masked {
            for i in 0..p.len() {
                p.mask[i] = if pruned[offset + i] { 0 } else { 1 };
            }
            offset += p.len();
        }
        m
    }
}

impl SaliencyLoss for NetworkBatchLoss<'_> {
    fn weight_count(&self) -> usize {
        self.model.prunable_weight_count()
    }

    fn weights(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.weight_count());
        for p in &self.model.masked {
            out.extend_from_slice(p.weights.data());
        }
        out
    }

    fn dense_loss_and_grad(&self) -> Result<(f64, Vec<f64>)> {
        let (loss, grads) = self.model.grads_on_batch(self.x, self.labels)?;
        let mut flat = Vec::with_capacity(self.weight_count());
        for p in &self.model.masked {
            flat.extend_from_slice(grads.layers[p.layer_id].as_ref().unwrap().weight.data());
        }
        Ok((loss, flat))
    }

    fn loss_with_pruned(&self, pruned: &[bool]) -> Result<f64> {
        self.with_pruned(pruned).loss_on_batch(self.x, self.labels)
    }

    fn finetuned_loss_with_pruned(&self, pruned: &[bool], steps: usize) -> Result<Option<f64>> {
        let mut m = self.with_pruned(pruned);
        let cfg = SgdConfig {
            lr: self.finetune.lr,
            momentum: self.finetune.momentum,
            weight_decay: 0.0,
        };
        let mut vel_w: Vec<Tensor> = m
            .masked
            .iter()
            .map(|p| Tensor::zeros(p.weights.shape().to_vec()))
            .collect();
        let mut vel_b: Vec<Tensor> = m
            .biases
            .iter()
            .map(|(_, b)| Tensor::zeros(b.shape().to_vec()))
            .collect();
        let mut vel_dense: Vec<Tensor> = m
            .dense
            .iter()
            .map(|(_, w)| Tensor::zeros(w.shape().to_vec()))
            .collect();
        for _ in 0..steps {
            let (_, grads) = m.grads_on_batch(self.x, self.labels)?;
            for (slot, p) in m.masked.iter_mut().enumerate() {
                let g = &grads.layers[p.layer_id].as_ref().unwrap().weight;
                sgd_step_masked(&cfg, &mut vel_w[slot], &mut p.weights, g, &p.mask)?;
            }
            for (slot, (layer_id, w)) in m.dense.iter_mut().enumerate() {
                let g = &grads.layers[*layer_id].as_ref().unwrap().weight;
                crate::optim::sgd_step(&cfg, &mut vel_dense[slot], w, g)?;
            }
            for (slot, (layer_id, b)) in m.biases.iter_mut().enumerate() {
                let g = &grads.layers[*layer_id].as_ref().unwrap().bias;
                crate::optim::sgd_step(&cfg, &mut vel_b[slot], b, g)?;
            }
        }
        Ok(Some(m.loss_on_batch(self.x, self.labels)?))
    }
}
