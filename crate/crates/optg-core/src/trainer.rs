//! Joint weight + mask-score training: per-epoch global binarization, STE
//! mask gradients accumulated every iteration, SGD on both parameter sets,
//! with schedules evaluated at epoch granularity.

use crate::data::{BatchIterator, Dataset};
use crate::error::{Error, Result};
use crate::loss::{argmax_rows, softmax_cross_entropy};
use crate::masking::{
    binarize_global, binarize_layerwise, global_sparsity, prune_count, ste_mask_gradient,
    MaskGradAccumulator, MaskedParameter,
};
use crate::metrics::MetricRecord;
use crate::nn::{GradientTape, LayerParams, Network, ParamGrads, Params};
use crate::optim::{sgd_step, sgd_step_masked, SgdConfig};
use crate::rng::Rng;
use crate::schedules::{LrSchedule, SparsitySchedule};
use crate::tensor::Tensor;
use alloc::vec::Vec;

/// Seed domain tags so init/shuffle/data streams never collide.
pub const SEED_DOMAIN_INIT: u64 = 0x1;

/// How often the binary mask is recomputed from the scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskUpdateFrequency {
    /// Once, before the first iteration of each epoch.
    Epoch,
    /// Every `n` iterations (1 = every iteration), plus epoch start.
    Iterations(usize),
}

/// A network whose prunable weights carry mask scores and binary masks.
/// Biases and explicitly exempted layers train densely and are never masked.
#[derive(Debug, Clone)]
pub struct SparseModel {
    pub network: Network,
    /// Prunable parametric layers (weights + scores + mask).
    pub masked: Vec<MaskedParameter>,
    /// Exempted parametric layers trained dense: `(layer_id, weights)`.
    pub dense: Vec<(usize, Tensor)>,
    /// Biases of every parametric layer: `(layer_id, bias)`.
    pub biases: Vec<(usize, Tensor)>,
}

impl SparseModel {
    /// Initializes weights (Kaiming-uniform, zero bias) from the seed and
    /// wraps every parametric layer not in `exempt` as a masked parameter.
    pub fn init(network: Network, seed: u64, exempt: &[usize]) -> Self {
        let mut rng = Rng::derive(seed, SEED_DOMAIN_INIT, 0);
        let params = network.init_params(&mut rng);
        let mut masked = Vec::new();
        let mut dense = Vec::new();
        let mut biases = Vec::new();
        for (i, slot) in params.layers.into_iter().enumerate() {
            if let Some(p) = slot {
                if exempt.contains(&i) {
                    dense.push((i, p.weight));
                } else {
                    masked.push(MaskedParameter::new(i, p.weight));
                }
                biases.push((i, p.bias));
            }
        }
        SparseModel {
            network,
            masked,
            dense,
            biases,
        }
    }

    /// Count of weights subject to masking (`N` in sparsity accounting).
    pub fn prunable_weight_count(&self) -> usize {
        crate::masking::total_weights(&self.masked)
    }

    pub fn global_sparsity(&self) -> f64 {
        global_sparsity(&self.masked)
    }

    /// Assembles per-layer parameters with `w ⊙ m` in the masked slots.
    pub fn effective_params(&self) -> Params {
        let mut layers: Vec<Option<LayerParams>> =
            core::iter::repeat_with(|| None)
                .take(self.network.specs().len())
                .collect();
        let mut weights: Vec<(usize, Tensor)> = self
            .masked
            .iter()
            .map(|p| (p.layer_id, p.effective_weights()))
            .collect();
        weights.extend(self.dense.iter().cloned());
        for (layer_id, w) in weights {
            layers[layer_id] = Some(LayerParams {
                weight: w,
                bias: Tensor::zeros(
                    self.network.specs()[layer_id].bias_shape().unwrap(),
                ),
            });
        }
        for (layer_id, b) in &self.biases {
            layers[*layer_id].as_mut().unwrap().bias = b.clone();
        }
        Params { layers }
    }

    /// Mean loss over one batch, no gradients.
    pub fn loss_on_batch(&self, x: &Tensor, labels: &[usize]) -> Result<f64> {
        let params = self.effective_params();
        let logits = self.network.forward(&params, x, None)?;
        Ok(softmax_cross_entropy(&logits, labels)?.0)
    }

    /// Forward + backward over one batch; returns the loss and all
    /// parameter gradients w.r.t. the effective (masked) weights.
    pub fn grads_on_batch(&self, x: &Tensor, labels: &[usize]) -> Result<(f64, ParamGrads)> {
        let params = self.effective_params();
        let mut tape = GradientTape::new();
        let logits = self.network.forward(&params, x, Some(&mut tape))?;
        let (loss, grad_logits) = softmax_cross_entropy(&logits, labels)?;
        let (_, grads) = self.network.backward(&params, &mut tape, &grad_logits)?;
        Ok((loss, grads))
    }

    /// `(label, sparsity)` rows for all prunable layers.
    pub fn per_layer_sparsity(&self) -> Vec<(alloc::string::String, f64)> {
        self.masked
            .iter()
            .map(|p| (self.network.layer_label(p.layer_id), p.sparsity()))
            .collect()
    }
}

/// Accuracy of the model over `range` of the dataset, batched; returns
/// `(correct, evaluated)`. Integer counts, so chunked callers can sum
/// without affecting the result.
pub fn evaluate_accuracy(
    network: &Network,
    params: &Params,
    data: &Dataset,
    batch_size: usize,
    range: core::ops::Range<usize>,
) -> Result<(usize, usize)> {
    if range.end > data.len() || range.start > range.end {
        return Err(Error::input("evaluation range out of bounds"));
    }
    let mut correct = 0;
    let mut start = range.start;
    while start < range.end {
        let end = (start + batch_size.max(1)).min(range.end);
        let idx: Vec<u32> = (start as u32..end as u32).collect();
        let (x, y) = data.batch(&idx)?;
        let logits = network.forward(params, &x, None)?;
        let pred = argmax_rows(&logits)?;
        correct += pred.iter().zip(&y).filter(|(p, t)| p == t).count();
        start = end;
    }
    Ok((correct, range.end - range.start))
}

/// Hyperparameters for the joint weight + supermask trainer.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub weight_lr0: f64,
    pub weight_momentum: f64,
    pub weight_decay: f64,
    /// Momentum on the mask scores (decay defaults to 0 so scores are not
    /// pulled toward the all-tie point).
    pub mask_momentum: f64,
    pub mask_weight_decay: f64,
    pub mask_update: MaskUpdateFrequency,
    /// Per-prunable-layer sparsity budgets; `None` = one global ranking.
    pub budgets: Option<Vec<f64>>,
    pub seed: u64,
    /// Supermask-only training: weights and biases stay fixed.
    pub freeze_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            weight_lr0: 0.1,
            weight_momentum: 0.9,
            weight_decay: 1e-3,
            mask_momentum: 0.9,
            mask_weight_decay: 0.0,
            mask_update: MaskUpdateFrequency::Epoch,
            budgets: None,
            seed: 0,
            freeze_weights: false,
        }
    }
}

/// Full optimizer state of a run at an epoch boundary; everything needed to
/// continue bit-identically.
#[derive(Debug, Clone)]
pub struct TrainerState {
    pub epoch: usize,
    pub masked: Vec<MaskedParameter>,
    pub dense: Vec<(usize, Tensor)>,
    pub biases: Vec<(usize, Tensor)>,
    pub vel_weights: Vec<Tensor>,
    pub vel_dense: Vec<Tensor>,
    pub vel_biases: Vec<Tensor>,
    pub vel_scores: Vec<Tensor>,
}

/// The epoch-loop trainer: schedules, binarization, and SGD over both
/// parameter sets.
pub struct Trainer {
    model: SparseModel,
    cfg: TrainConfig,
    sparsity: SparsitySchedule,
    lr: LrSchedule,
    vel_weights: Vec<Tensor>,
    vel_dense: Vec<Tensor>,
    vel_biases: Vec<Tensor>,
    vel_scores: Vec<Tensor>,
    accumulator: MaskGradAccumulator,
    epoch: usize,
    last_pruned: usize,
    binarize_events: usize,
}

impl Trainer {
    pub fn new(model: SparseModel, cfg: TrainConfig, sparsity: SparsitySchedule) -> Result<Self> {
        if cfg.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        let n = model.prunable_weight_count();
        if sparsity.target > 0.0 && n > 0 && prune_count(sparsity.target, n) >= n {
            return Err(Error::config(format_args!(
                "target sparsity {} would prune all {n} prunable weights (needs P < 1 - 1/N)",
                sparsity.target
            )));
        }
        if let Some(budgets) = &cfg.budgets {
            if budgets.len() != model.masked.len() {
                return Err(Error::config(format_args!(
                    "{} budgets for {} prunable layers",
                    budgets.len(),
                    model.masked.len()
                )));
            }
            for (b, p) in budgets.iter().zip(&model.masked) {
                if !(0.0..=1.0).contains(b) || (!p.is_empty() && prune_count(*b, p.len()) >= p.len())
                {
                    return Err(Error::config(format_args!(
                        "budget {b} infeasible for layer {} with {} weights",
                        p.layer_id,
                        p.len()
                    )));
                }
            }
        }
        if let MaskUpdateFrequency::Iterations(0) = cfg.mask_update {
            return Err(Error::config("mask update interval must be positive"));
        }
        let lr = LrSchedule::new(cfg.weight_lr0, sparsity.total_epochs)?;
        let vel_weights = model
            .masked
            .iter()
            .map(|p| Tensor::zeros(p.weights.shape().to_vec()))
            .collect();
        let vel_scores = model
            .masked
            .iter()
            .map(|p| Tensor::zeros(p.scores.shape().to_vec()))
            .collect();
        let vel_dense = model
            .dense
            .iter()
            .map(|(_, w)| Tensor::zeros(w.shape().to_vec()))
            .collect();
        let vel_biases = model
            .biases
            .iter()
            .map(|(_, b)| Tensor::zeros(b.shape().to_vec()))
            .collect();
        let accumulator = MaskGradAccumulator::new(&model.masked);
        Ok(Trainer {
            model,
            cfg,
            sparsity,
            lr,
            vel_weights,
            vel_dense,
            vel_biases,
            vel_scores,
            accumulator,
            epoch: 0,
            last_pruned: 0,
            binarize_events: 0,
        })
    }

    pub fn model(&self) -> &SparseModel {
        &self.model
    }

    /// Mutable model access for scripted experiments (seeding masks or
    /// scores between epochs). Changing tensor shapes invalidates the
    /// trainer's optimizer state.
    pub fn model_mut(&mut self) -> &mut SparseModel {
        &mut self.model
    }

    /// How many times the binary mask has been recomputed.
    pub fn binarize_events(&self) -> usize {
        self.binarize_events
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn total_epochs(&self) -> usize {
        self.sparsity.total_epochs
    }

    pub fn sparsity_schedule(&self) -> &SparsitySchedule {
        &self.sparsity
    }

    pub fn lr_schedule(&self) -> &LrSchedule {
        &self.lr
    }

    pub fn accumulator(&self) -> &MaskGradAccumulator {
        &self.accumulator
    }

    /// Sparsity the trainer will binarize at for epoch `k`. The final epoch
    /// snaps to exactly the target so the finished model meets its budget
    /// even when the sigmoid has not saturated.
    pub fn epoch_sparsity(&self, k: usize) -> Result<f64> {
        if k + 1 == self.sparsity.total_epochs {
            Ok(self.sparsity.target)
        } else {
            self.sparsity.sparsity_at_epoch(k)
        }
    }

    fn binarize(&mut self, p_k: f64) -> Result<usize> {
        let pruned = match &self.cfg.budgets {
            None => binarize_global(&mut self.model.masked, p_k)?,
            Some(budgets) => {
                // Budgets prescribe the final split; earlier epochs scale
                // them by the ramp progress.
                let progress = if self.sparsity.target == 0.0 {
                    0.0
                } else {
                    p_k / self.sparsity.target
                };
                let counts: Vec<usize> = budgets
                    .iter()
                    .zip(&self.model.masked)
                    .map(|(b, p)| prune_count(b * progress, p.len()))
                    .collect();
                binarize_layerwise(&mut self.model.masked, &counts)?
            }
        };
        // The accumulator resets exactly when the binary mask is recomputed.
        self.accumulator.reset();
        self.last_pruned = pruned;
        self.binarize_events += 1;
        Ok(pruned)
    }

    /// Runs one epoch of Alg-style training: set `P_k` and the mask LR,
    /// rebinarize, then per batch forward with `w ⊙ m`, STE mask gradients,
    /// and SGD updates of weights and scores.
    pub fn train_epoch(
        &mut self,
        train: &Dataset,
        eval: Option<&Dataset>,
    ) -> Result<MetricRecord> {
        let k = self.epoch;
        if k >= self.sparsity.total_epochs {
            return Err(Error::state(format_args!(
                "epoch {k} past configured total {}",
                self.sparsity.total_epochs
            )));
        }
        let p_k = self.epoch_sparsity(k)?;
        let lr_w = self.lr.weight_lr_at_epoch(k)?;
        let lr_m = self.lr.mask_lr_at_epoch(&self.sparsity, k)?;
        let w_cfg = SgdConfig {
            lr: lr_w,
            momentum: self.cfg.weight_momentum,
            weight_decay: self.cfg.weight_decay,
        };
        let m_cfg = SgdConfig {
            lr: lr_m,
            momentum: self.cfg.mask_momentum,
            weight_decay: self.cfg.mask_weight_decay,
        };

        self.binarize(p_k)?;

        let mut it = BatchIterator::new(train.len(), self.cfg.batch_size, self.cfg.seed, k as u64)?;
        let mut loss_sum = 0.0;
        let mut samples = 0usize;
        let mut iteration = 0usize;
        while let Some(idx) = it.next_batch() {
            let idx = idx.to_vec();
            if let MaskUpdateFrequency::Iterations(n) = self.cfg.mask_update {
                if iteration > 0 && iteration % n == 0 {
                    self.binarize(p_k)?;
                }
            }
            let (x, y) = train.batch(&idx)?;
            let (loss, grads) = self.model.grads_on_batch(&x, &y)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch: k,
                    iteration,
                });
            }
            loss_sum += loss * idx.len() as f64;
            samples += idx.len();
            self.apply_batch_updates(&grads, &w_cfg, &m_cfg)?;
            iteration += 1;
        }

        let eval_accuracy = match eval {
            Some(data) if !data.is_empty() => {
                let params = self.model.effective_params();
                let (correct, total) = evaluate_accuracy(
                    &self.model.network,
                    &params,
                    data,
                    self.cfg.batch_size,
                    0..data.len(),
                )?;
                Some(correct as f64 / total as f64)
            }
            _ => None,
        };

        let record = MetricRecord {
            epoch: k,
            sparsity: self.model.global_sparsity(),
            per_layer_sparsity: self.model.per_layer_sparsity(),
            train_loss: if samples == 0 {
                0.0
            } else {
                loss_sum / samples as f64
            },
            eval_accuracy,
            weight_lr: lr_w,
            mask_lr: lr_m,
            seconds: 0.0,
        };
        self.epoch += 1;
        Ok(record)
    }

    fn apply_batch_updates(
        &mut self,
        grads: &ParamGrads,
        w_cfg: &SgdConfig,
        m_cfg: &SgdConfig,
    ) -> Result<()> {
        for (slot, p) in self.model.masked.iter_mut().enumerate() {
            let g_eff = &grads.layers[p.layer_id]
                .as_ref()
                .ok_or_else(|| Error::state("missing gradient slot"))?
                .weight;
            let mask_grad = ste_mask_gradient(p, g_eff)?;
            self.accumulator.accumulate(slot, &mask_grad)?;
            if !self.cfg.freeze_weights {
                // dL/dw = g_eff at kept positions, 0 at pruned ones; the
                // masked step also freezes pruned velocity so stored values
                // survive for revival bit-exactly.
                sgd_step_masked(
                    w_cfg,
                    &mut self.vel_weights[slot],
                    &mut p.weights,
                    g_eff,
                    &p.mask,
                )?;
            }
            sgd_step(m_cfg, &mut self.vel_scores[slot], &mut p.scores, &mask_grad)?;
        }
        if !self.cfg.freeze_weights {
            for (slot, (layer_id, w)) in self.model.dense.iter_mut().enumerate() {
                let g = &grads.layers[*layer_id]
                    .as_ref()
                    .ok_or_else(|| Error::state("missing gradient slot"))?
                    .weight;
                sgd_step(w_cfg, &mut self.vel_dense[slot], w, g)?;
            }
            for (slot, (layer_id, b)) in self.model.biases.iter_mut().enumerate() {
                let g = &grads.layers[*layer_id]
                    .as_ref()
                    .ok_or_else(|| Error::state("missing gradient slot"))?
                    .bias;
                sgd_step(w_cfg, &mut self.vel_biases[slot], b, g)?;
            }
        }
        Ok(())
    }

    /// Trains all remaining epochs, collecting one record per epoch.
    pub fn run(&mut self, train: &Dataset, eval: Option<&Dataset>) -> Result<Vec<MetricRecord>> {
        let mut records = Vec::new();
        while self.epoch < self.sparsity.total_epochs {
            records.push(self.train_epoch(train, eval)?);
        }
        Ok(records)
    }

    /// Snapshot of all mutable state at the current epoch boundary.
    pub fn export_state(&self) -> TrainerState {
        TrainerState {
            epoch: self.epoch,
            masked: self.model.masked.clone(),
            dense: self.model.dense.clone(),
            biases: self.model.biases.clone(),
            vel_weights: self.vel_weights.clone(),
            vel_dense: self.vel_dense.clone(),
            vel_biases: self.vel_biases.clone(),
            vel_scores: self.vel_scores.clone(),
        }
    }

    /// Restores a snapshot produced by `export_state` on a trainer built
    /// with the same network and config.
    pub fn import_state(&mut self, state: TrainerState) -> Result<()> {
        if state.masked.len() != self.model.masked.len()
            || state.dense.len() != self.model.dense.len()
            || state.biases.len() != self.model.biases.len()
        {
            return Err(Error::state("checkpoint does not match model layout"));
        }
        for (cur, new) in self.model.masked.iter().zip(&state.masked) {
            if cur.layer_id != new.layer_id || !cur.weights.same_shape(&new.weights) {
                return Err(Error::state("checkpoint layer shapes do not match"));
            }
        }
        if state.epoch > self.sparsity.total_epochs {
            return Err(Error::state("checkpoint epoch past schedule end"));
        }
        self.model.masked = state.masked;
        self.model.dense = state.dense;
        self.model.biases = state.biases;
        self.vel_weights = state.vel_weights;
        self.vel_dense = state.vel_dense;
        self.vel_biases = state.vel_biases;
        self.vel_scores = state.vel_scores;
        self.epoch = state.epoch;
        self.accumulator = MaskGradAccumulator::new(&self.model.masked);
        self.last_pruned = crate::masking::total_pruned(&self.model.masked);
        Ok(())
    }
}

/// Fixed-mask fine-tuning: plain SGD on weights and biases, masks and
/// scores untouched. Used by the prune-and-retrain baselines.
#[derive(Debug, Clone)]
pub struct FineTuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Offset added to the shuffle epoch index so successive cycles see
    /// different data orders.
    pub shuffle_offset: u64,
}

pub fn fine_tune(
    model: &mut SparseModel,
    cfg: &FineTuneConfig,
    train: &Dataset,
    eval: Option<&Dataset>,
) -> Result<Vec<MetricRecord>> {
    fine_tune_with(model, cfg, train, eval, &mut |_| {})
}

/// `fine_tune` with a per-epoch hook over the finished record (callers can
/// stamp wall time or stream rows out).
pub fn fine_tune_with(
    model: &mut SparseModel,
    cfg: &FineTuneConfig,
    train: &Dataset,
    eval: Option<&Dataset>,
    on_epoch: &mut dyn FnMut(&mut MetricRecord),
) -> Result<Vec<MetricRecord>> {
    if cfg.batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    let lr = LrSchedule::new(cfg.lr0, cfg.epochs.max(1))?;
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

    let mut records = Vec::with_capacity(cfg.epochs);
    for k in 0..cfg.epochs {
        let step = SgdConfig {
            lr: lr.weight_lr_at_epoch(k)?,
            momentum: cfg.momentum,
            weight_decay: cfg.weight_decay,
        };
        let mut it = BatchIterator::new(
            train.len(),
            cfg.batch_size,
            cfg.seed,
            cfg.shuffle_offset + k as u64,
        )?;
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
        let eval_accuracy = match eval {
            Some(data) if !data.is_empty() => {
                let params = model.effective_params();
                let (correct, total) = evaluate_accuracy(
                    &model.network,
                    &params,
                    data,
                    cfg.batch_size,
                    0..data.len(),
                )?;
                Some(correct as f64 / total as f64)
            }
            _ => None,
        };
        let mut record = MetricRecord {
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
        };
        on_epoch(&mut record);
        records.push(record);
    }
    Ok(records)
}
