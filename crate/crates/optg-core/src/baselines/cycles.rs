//! Iterative magnitude prune-and-retrain: the sparsification budget is
//! split over `C` equal increments applied at epoch boundaries of one
//! continuous training run under a single cosine learning-rate schedule.
//!
//! `C = 1` prunes everything up front and is exactly one-shot magnitude
//! pruning followed by fine-tuning.

use crate::data::{BatchIterator, Dataset};
use crate::error::{Error, Result};
use crate::metrics::MetricRecord;
use crate::nn::Network;
use crate::optim::{sgd_step, sgd_step_masked, SgdConfig};
use crate::schedules::LrSchedule;
use crate::tensor::Tensor;
use crate::trainer::{evaluate_accuracy, SparseModel};
use alloc::vec::Vec;

use super::saliency::{magnitude_saliency, one_shot_prune};

#[derive(Debug, Clone)]
pub struct CycleConfig {
    pub cycles: usize,
    pub total_epochs: usize,
    pub target: f64,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct CycleOutcome {
    pub final_accuracy: f64,
    /// Sparsity imposed at the start of each cycle.
    pub cycle_sparsity: Vec<f64>,
    /// One record per epoch across the whole run.
    pub records: Vec<MetricRecord>,
}

/// Runs `C` magnitude-prune increments over one `E`-epoch training run on a
/// freshly initialized model; cycle `c` starts at sparsity `c * P / C`.
pub fn cycle_experiment(
    network: &Network,
    cfg: &CycleConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<CycleOutcome> {
    if cfg.cycles == 0 {
        return Err(Error::config("cycle count must be positive"));
    }
    if cfg.total_epochs % cfg.cycles != 0 {
        return Err(Error::config(format_args!(
            "total epochs {} not divisible by {} cycles",
            cfg.total_epochs, cfg.cycles
        )));
    }
    if !(0.0..1.0).contains(&cfg.target) {
        return Err(Error::input(format_args!(
            "target sparsity {} must be in [0, 1)",
            cfg.target
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    let epochs_per_cycle = cfg.total_epochs / cfg.cycles;
    let mut model = SparseModel::init(network.clone(), cfg.seed, &[]);
    let lr = LrSchedule::new(cfg.lr0, cfg.total_epochs)?;

    let mut vel_w: Vec<Tensor> = model
        .masked
        .iter()
        .map(|p| Tensor::zeros(p.weights.shape().to_vec()))
        .collect();
    let mut vel_dense: Vec<Tensor> = model
        .dense
        .iter()
        .map(|(_, w)| Tensor::zeros(w.shape().to_vec()))
        .collect();
    let mut vel_b: Vec<Tensor> = model
        .biases
        .iter()
        .map(|(_, b)| Tensor::zeros(b.shape().to_vec()))
        .collect();

    let mut records = Vec::with_capacity(cfg.total_epochs);
    let mut cycle_sparsity = Vec::with_capacity(cfg.cycles);
    for k in 0..cfg.total_epochs {
        if k % epochs_per_cycle == 0 {
            let c = k / epochs_per_cycle + 1;
            let p_c = cfg.target * c as f64 / cfg.cycles as f64;
            cycle_sparsity.push(p_c);
            // Pruned weights score |w ⊙ m| = 0, so the growing budget keeps
            // them out; this baseline never revives.
            let scores = magnitude_saliency(&model);
            one_shot_prune(&mut model, &scores, p_c)?;
        }
        let step = SgdConfig {
            lr: lr.weight_lr_at_epoch(k)?,
            momentum: cfg.momentum,
            weight_decay: cfg.weight_decay,
        };
        let mut it = BatchIterator::new(train.len(), cfg.batch_size, cfg.seed, k as u64)?;
        let mut loss_sum = 0.0;
        let mut samples = 0usize;
        let mut iteration = 0usize;
        while let Some(idx) = it.next_batch() {
            let idx = idx.to_vec();
            let (x, y) = train.batch(&idx)?;
            let (loss, grads) = model.grads_on_batch(&x, &y)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch: k,
                    iteration,
                });
            }
            loss_sum += loss * idx.len() as f64;
            samples += idx.len();
            for (slot, p) in model.masked.iter_mut().enumerate() {
                let g = &grads.layers[p.layer_id].as_ref().unwrap().weight;
                sgd_step_masked(&step, &mut vel_w[slot], &mut p.weights, g, &p.mask)?;
            }
            for (slot, (layer_id, w)) in model.dense.iter_mut().enumerate() {
                let g = &grads.layers[*layer_id].as_ref().unwrap().weight;
                sgd_step(&step, &mut vel_dense[slot], w, g)?;
            }
            for (slot, (layer_id, b)) in model.biases.iter_mut().enumerate() {
                let g = &grads.layers[*layer_id].as_ref().unwrap().bias;
                sgd_step(&step, &mut vel_b[slot], b, g)?;
            }
            iteration += 1;
        }
        let eval_accuracy = if test.is_empty() {
            None
        } else {
            let params = model.effective_params();
            let (correct, total) =
                evaluate_accuracy(&model.network, &params, test, cfg.batch_size, 0..test.len())?;
            Some(correct as f64 / total as f64)
        };
        records.push(MetricRecord {
            epoch: k,
            sparsity: model.global_sparsity(),
            per_layer_sparsity: model.per_layer_sparsity(),
            train_loss: if samples == 0 {
                0.0
            } else {
                loss_sum / samples as f64
            },
            eval_accuracy,
            weight_lr: step.lr,
            mask_lr: 0.0,
            seconds: 0.0,
        });
    }

    let params = model.effective_params();
    let (correct, total) = evaluate_accuracy(
        &model.network,
        &params,
        test,
        cfg.batch_size,
        0..test.len(),
    )?;
    Ok(CycleOutcome {
        final_accuracy: correct as f64 / total.max(1) as f64,
        cycle_sparsity,
        records,
    })
}
