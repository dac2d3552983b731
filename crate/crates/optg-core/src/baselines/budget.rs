//! Layer-wise sparsity allocations: uniform, the Erdős–Rényi-kernel
//! heuristic, and the allocations induced by global rankings.

use crate::error::{Error, Result};
use crate::masking::prune_count;
use crate::math;
use crate::nn::LayerSpec;
use crate::trainer::SparseModel;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetMode {
    /// Every prunable layer gets the global sparsity.
    Uniform,
    /// Layer density proportional to (sum of dims) / (product of dims),
    /// rescaled so the kept total matches the global budget.
    Erk,
    /// The allocation a single global sort of `|w|` would induce. Reported,
    /// not prescribed.
    GlobalMagnitude,
    /// The allocation currently induced by score binarization. Reported,
    /// not prescribed.
    OptgAuto,
}

/// Per-prunable-layer sparsity fractions for the given mode and global
/// target `p`, slot-aligned with `model.masked`.
pub fn layer_budget(model: &SparseModel, mode: BudgetMode, p: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::input(format_args!(
            "target sparsity {p} must be in [0, 1)"
        )));
    }
    let counts: Vec<usize> = model.masked.iter().map(|m| m.len()).collect();
    match mode {
        BudgetMode::Uniform => {
            for (c, m) in counts.iter().zip(&model.masked) {
                if *c > 0 && prune_count(p, *c) >= *c {
                    return Err(Error::config(format_args!(
                        "uniform budget {p} would fully prune layer {} ({c} weights)",
                        m.layer_id
                    )));
                }
            }
            Ok(vec![p; counts.len()])
        }
        BudgetMode::Erk => erk_budget(model, p, &counts),
        BudgetMode::GlobalMagnitude => {
            // Rank |w ⊙ m| globally and report where the prune budget lands.
            let total: usize = counts.iter().sum();
            let goal = prune_count(p, total);
            let mut keys: Vec<(f64, usize, usize)> = Vec::with_capacity(total);
            for (slot, m) in model.masked.iter().enumerate() {
                for (i, w) in m.effective_weights().data().iter().enumerate() {
                    keys.push((math::abs(*w), slot, i));
                }
            }
            keys.sort_unstable_by(|a, b| {
                a.0.total_cmp(&b.0)
                    .then_with(|| model.masked[a.1].layer_id.cmp(&model.masked[b.1].layer_id))
                    .then_with(|| a.2.cmp(&b.2))
            });
            let mut pruned = vec![0usize; counts.len()];
            for &(_, slot, _) in keys.iter().take(goal) {
                pruned[slot] += 1;
            }
            Ok(pruned
                .iter()
                .zip(&counts)
                .map(|(&x, &c)| if c == 0 { 0.0 } else { x as f64 / c as f64 })
                .collect())
        }
        BudgetMode::OptgAuto => Ok(model.masked.iter().map(|m| m.sparsity()).collect()),
    }
}

fn erk_budget(model: &SparseModel, p: f64, counts: &[usize]) -> Result<Vec<f64>> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Ok(Vec::new());
    }
    let keep_total = (total - prune_count(p, total)) as f64;
    // Raw score: (fan_in + fan_out + kernel terms) / parameter count.
    let raw: Vec<f64> = model
        .masked
        .iter()
        .map(|m| match model.network.specs()[m.layer_id] {
            LayerSpec::Linear {
                in_features,
                out_features,
            } => (in_features + out_features) as f64 / (in_features * out_features) as f64,
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => {
                (in_channels + out_channels + kernel_h + kernel_w) as f64
                    / (in_channels * out_channels * kernel_h * kernel_w) as f64
            }
            _ => 1.0,
        })
        .collect();

    // Scale densities, capping saturated layers at fully dense and
    // redistributing their slack.
    let mut capped = vec![false; raw.len()];
    let densities = loop {
        let mut denom = 0.0;
        let mut keep_capped = 0.0;
        for i in 0..raw.len() {
            if capped[i] {
                keep_capped += counts[i] as f64;
            } else {
                denom += raw[i] * counts[i] as f64;
            }
        }
        if denom == 0.0 {
            break raw
                .iter()
                .enumerate()
                .map(|(i, _)| if capped[i] { 1.0 } else { 0.0 })
                .collect::<Vec<f64>>();
        }
        let scale = (keep_total - keep_capped) / denom;
        if let Some(overflow) = (0..raw.len())
            .filter(|&i| !capped[i] && scale * raw[i] > 1.0)
            .max_by(|&a, &b| (raw[a]).total_cmp(&raw[b]))
        {
            capped[overflow] = true;
            continue;
        }
        break raw
            .iter()
            .enumerate()
            .map(|(i, &r)| if capped[i] { 1.0 } else { scale * r })
            .collect::<Vec<f64>>();
    };

    let budgets: Vec<f64> = densities.iter().map(|d| 1.0 - d).collect();
    for (b, (c, m)) in budgets.iter().zip(counts.iter().zip(&model.masked)) {
        if *c > 0 && prune_count(*b, *c) >= *c {
            return Err(Error::config(format_args!(
                "ERK budget {b:.4} would fully prune layer {}",
                m.layer_id
            )));
        }
    }
    Ok(budgets)
}
