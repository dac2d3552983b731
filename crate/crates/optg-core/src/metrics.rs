//! Per-epoch training metrics.

use alloc::string::String;
use alloc::vec::Vec;

/// One row of training history. `seconds` is zero inside the core trainer;
/// callers that own a clock fill it in.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub epoch: usize,
    /// Global sparsity over the prunable set, exact mask counts.
    pub sparsity: f64,
    /// `(layer label, sparsity)` per prunable layer.
    pub per_layer_sparsity: Vec<(String, f64)>,
    pub train_loss: f64,
    pub eval_accuracy: Option<f64>,
    pub weight_lr: f64,
    pub mask_lr: f64,
    pub seconds: f64,
}
