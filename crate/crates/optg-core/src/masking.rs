//! Masked-parameter bookkeeping: continuous mask scores, binary masks from
//! global top-k thresholding, straight-through mask gradients, and per-epoch
//! mask-gradient accumulation.

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;
use alloc::vec;
use alloc::vec::Vec;

/// One prunable layer's weights `w`, continuous scores, and binary mask.
///
/// The stored weights are never zeroed by pruning; masked-off entries keep
/// their last trained value so a later revival restores them exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedParameter {
    /// Index of the owning layer in the network.
    pub layer_id: usize,
    /// Dense weights `w`; preserved (not trained) wherever `mask == 0`.
    pub weights: Tensor,
    /// Continuous mask scores, same shape as `weights`.
    pub scores: Tensor,
    /// Binary mask, 1 = kept, 0 = pruned.
    pub mask: Vec<u8>,
}

impl MaskedParameter {
    /// Fresh parameter: scores all zero, mask all ones.
    pub fn new(layer_id: usize, weights: Tensor) -> Self {
        let n = weights.len();
        MaskedParameter {
            layer_id,
            scores: Tensor::zeros(weights.shape().to_vec()),
            mask: vec![1; n],
            weights,
        }
    }

    /// `w ⊙ m`: zero exactly where the mask is 0.
    pub fn effective_weights(&self) -> Tensor {
        let data = self
            .weights
            .data()
            .iter()
            .zip(&self.mask)
            .map(|(&w, &m)| if m == 1 { w } else { 0.0 })
            .collect();
        Tensor::new(self.weights.shape().to_vec(), data).unwrap()
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn pruned_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 0).count()
    }

    pub fn sparsity(&self) -> f64 {
        if self.mask.is_empty() {
            0.0
        } else {
            self.pruned_count() as f64 / self.mask.len() as f64
        }
    }
}

/// Total prunable weight count across parameters.
pub fn total_weights(params: &[MaskedParameter]) -> usize {
    params.iter().map(MaskedParameter::len).sum()
}

/// Total pruned count across parameters.
pub fn total_pruned(params: &[MaskedParameter]) -> usize {
    params.iter().map(MaskedParameter::pruned_count).sum()
}

pub fn global_sparsity(params: &[MaskedParameter]) -> f64 {
    let n = total_weights(params);
    if n == 0 {
        0.0
    } else {
        total_pruned(params) as f64 / n as f64
    }
}

/// `⌈p·n⌉` with a guard against float representation of products that are
/// mathematically integral (e.g. 0.95 * 20 evaluating to 19.000000000000004).
pub fn prune_count(p: f64, n: usize) -> usize {
    let t = p * n as f64;
    let r = math::round(t);
    if math::abs(t - r) < 1e-9 * (n as f64).max(1.0) {
        r as usize
    } else {
        math::ceil(t) as usize
    }
}

/// Sets masks so that exactly `⌈p_k·N⌉` entries with the smallest scores
/// across all parameters are 0. Ties break by `(layer_id, flat index)`
/// ascending: the lower index is pruned first.
///
/// Returns the pruned count. Rejects a fully-pruned model.
pub fn binarize_global(params: &mut [MaskedParameter], p_k: f64) -> Result<usize> {
    let keys: Vec<(f64, usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(slot, p)| {
            p.scores
                .data()
                .iter()
                .enumerate()
                .map(move |(i, &s)| (s, slot, i))
        })
        .collect();
    binarize_by_keys(params, keys, p_k)
}

/// Same selection rule, but ranking by caller-provided scores (saliency,
/// magnitude) instead of the stored mask scores. Score tensors must align
/// with `params` slot by slot.
pub fn binarize_by_scores(
    params: &mut [MaskedParameter],
    scores: &[Tensor],
    p_k: f64,
) -> Result<usize> {
    if scores.len() != params.len() {
        return Err(Error::dimension("score slot count mismatch"));
    }
    for (p, s) in params.iter().zip(scores) {
        if !p.scores.same_shape(s) {
            return Err(Error::dimension(format_args!(
                "score shape {:?} for layer {} weights {:?}",
                s.shape(),
                p.layer_id,
                p.weights.shape()
            )));
        }
    }
    let keys: Vec<(f64, usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(slot, _)| {
            scores[slot]
                .data()
                .iter()
                .enumerate()
                .map(move |(i, &s)| (s, slot, i))
        })
        .collect();
    binarize_by_keys(params, keys, p_k)
}

fn binarize_by_keys(
    params: &mut [MaskedParameter],
    mut keys: Vec<(f64, usize, usize)>,
    p_k: f64,
) -> Result<usize> {
    if !(0.0..=1.0).contains(&p_k) {
        return Err(Error::input(format_args!(
            "sparsity {p_k} outside [0, 1]"
        )));
    }
    let n = keys.len();
    let count = prune_count(p_k, n);
    if n > 0 && count >= n {
        return Err(Error::config(format_args!(
            "sparsity {p_k} would prune all {n} weights; it must stay below 1 - 1/N"
        )));
    }
    // Lower (layer_id, flat index) prunes first on equal scores. layer_id
    // rather than slot index so the order matches the network layout even if
    // slots were assembled out of order.
    keys.sort_unstable_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| params[a.1].layer_id.cmp(&params[b.1].layer_id))
            .then_with(|| a.2.cmp(&b.2))
    });
    for p in params.iter_mut() {
        p.mask.fill(1);
    }
    for &(_, slot, i) in keys.iter().take(count) {
        params[slot].mask[i] = 0;
    }
    Ok(count)
}

/// Per-layer binarization under explicit per-layer prune counts (layer
/// budget ablations). Within each layer the selection rule matches
/// `binarize_global`.
pub fn binarize_layerwise(params: &mut [MaskedParameter], counts: &[usize]) -> Result<usize> {
    if counts.len() != params.len() {
        return Err(Error::dimension("budget count per layer mismatch"));
    }
    let mut pruned = 0;
    for (p, &count) in params.iter_mut().zip(counts) {
        if count >= p.len() && !p.is_empty() {
            return Err(Error::config(format_args!(
                "budget prunes all {} weights of layer {}",
                p.len(),
                p.layer_id
            )));
        }
        let mut idx: Vec<usize> = (0..p.len()).collect();
        let scores = p.scores.data();
        idx.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]).then_with(|| a.cmp(&b)));
        p.mask.fill(1);
        for &i in idx.iter().take(count) {
            p.mask[i] = 0;
        }
        pruned += count;
    }
    Ok(pruned)
}

/// Straight-through mask gradient: `dL/dscores = dL/d(w ⊙ m) ⊙ w`.
///
/// The product is taken at every position, masked-off ones included, so the
/// scores of pruned weights keep receiving the revival signal.
pub fn ste_mask_gradient(p: &MaskedParameter, grad_masked_weight: &Tensor) -> Result<Tensor> {
    if !grad_masked_weight.same_shape(&p.weights) {
        return Err(Error::dimension(format_args!(
            "mask gradient shape {:?} vs weights {:?}",
            grad_masked_weight.shape(),
            p.weights.shape()
        )));
    }
    grad_masked_weight.hadamard(&p.weights)
}

/// Running sum of mask gradients over the current epoch. Reset whenever the
/// binary mask is recomputed.
#[derive(Debug, Clone)]
pub struct MaskGradAccumulator {
    sums: Vec<Tensor>,
    steps: usize,
}

impl MaskGradAccumulator {
    pub fn new(params: &[MaskedParameter]) -> Self {
        MaskGradAccumulator {
            sums: params
                .iter()
                .map(|p| Tensor::zeros(p.scores.shape().to_vec()))
                .collect(),
            steps: 0,
        }
    }

    pub fn accumulate(&mut self, slot: usize, grads: &Tensor) -> Result<()> {
        let sum = self
            .sums
            .get_mut(slot)
            .ok_or_else(|| Error::input(format_args!("no accumulator slot {slot}")))?;
        if !sum.same_shape(grads) {
            return Err(Error::dimension("accumulated gradient shape mismatch"));
        }
        for (s, g) in sum.data_mut().iter_mut().zip(grads.data()) {
            *s += g;
        }
        if slot == 0 {
            self.steps += 1;
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn sums(&self) -> &[Tensor] {
        &self.sums
    }

    /// Takes the accumulated sums and zeroes the state. Returns `None` when
    /// nothing was accumulated since the last reset (flush is then a no-op).
    pub fn flush(&mut self) -> Option<Vec<Tensor>> {
        if self.steps == 0 {
            return None;
        }
        let taken = self
            .sums
            .iter_mut()
            .map(|s| {
                let out = s.clone();
                s.data_mut().fill(0.0);
                out
            })
            .collect();
        self.steps = 0;
        Some(taken)
    }

    pub fn reset(&mut self) {
        for s in &mut self.sums {
            s.data_mut().fill(0.0);
        }
        self.steps = 0;
    }
}

/// Stable fingerprint of all masks; used to assert the mask is constant
/// within an epoch.
pub fn mask_fingerprint(params: &[MaskedParameter]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in params {
        for &m in &p.mask {
            h ^= m as u64 + 0x9e37_79b9;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(layer_id: usize, scores: &[f64]) -> MaskedParameter {
        let mut p = MaskedParameter::new(
            layer_id,
            Tensor::filled(vec![scores.len()], 1.0),
        );
        p.scores = Tensor::new(vec![scores.len()], scores.to_vec()).unwrap();
        p
    }

    #[test]
    fn effective_weights_identity_and_zero_masks() {
        let mut p = MaskedParameter::new(0, Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        assert_eq!(p.effective_weights().data(), &[1.0, 2.0, 3.0]);
        p.mask = vec![0, 0, 0];
        assert_eq!(p.effective_weights().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn effective_weights_elementwise() {
        let mut p = MaskedParameter::new(0, Tensor::new(vec![3], vec![1.0, -2.0, 3.0]).unwrap());
        p.mask = vec![1, 0, 1];
        assert_eq!(p.effective_weights().data(), &[1.0, 0.0, 3.0]);
    }

    #[test]
    fn binarize_prunes_smallest_scores() {
        let mut params = vec![param(0, &[0.3, -0.1, 0.5, 0.2])];
        let pruned = binarize_global(&mut params, 0.5).unwrap();
        assert_eq!(pruned, 2);
        assert_eq!(params[0].mask, vec![1, 0, 1, 0]);
    }

    #[test]
    fn binarize_zero_sparsity_keeps_everything() {
        let mut params = vec![param(0, &[0.0; 5]), param(1, &[1.0; 3])];
        assert_eq!(binarize_global(&mut params, 0.0).unwrap(), 0);
        assert!(params.iter().all(|p| p.mask.iter().all(|&m| m == 1)));
    }

    #[test]
    fn binarize_all_ties_prunes_lowest_indices_first() {
        // All scores zero (fresh init): first 2 flat indices must go.
        let mut params = vec![param(0, &[0.0; 8])];
        let pruned = binarize_global(&mut params, 0.25).unwrap();
        assert_eq!(pruned, 2);
        assert_eq!(params[0].mask, vec![0, 0, 1, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn binarize_tie_break_across_layers_uses_layer_id() {
        let mut params = vec![param(3, &[0.0; 4]), param(1, &[0.0; 4])];
        binarize_global(&mut params, 0.25).unwrap();
        // layer_id 1 loses its first two indices, layer 3 untouched.
        assert_eq!(params[1].mask, vec![0, 0, 1, 1]);
        assert_eq!(params[0].mask, vec![1, 1, 1, 1]);
    }

    #[test]
    fn binarize_rejects_full_prune() {
        let mut params = vec![param(0, &[0.0; 4])];
        assert!(matches!(
            binarize_global(&mut params, 1.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn binarize_rejects_bad_fraction() {
        let mut params = vec![param(0, &[0.0; 4])];
        assert!(matches!(
            binarize_global(&mut params, -0.1),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn exact_count_on_fine_grid() {
        let sizes = [7usize, 16, 33];
        for &size in &sizes {
            for step in 0..100 {
                let p_k = step as f64 / 100.0 * (1.0 - 1.0 / size as f64);
                let mut params = vec![param(0, &vec![0.25; size])];
                let pruned = binarize_global(&mut params, p_k).unwrap();
                assert_eq!(pruned, prune_count(p_k, size));
                assert_eq!(total_pruned(&params), pruned);
            }
        }
    }

    #[test]
    fn prune_count_integral_products() {
        // 0.95 * 20 lands just above 19.0 in f64; must not round up to 20.
        assert_eq!(prune_count(0.95, 20), 19);
        assert_eq!(prune_count(0.1, 10), 1);
        assert_eq!(prune_count(0.5, 4), 2);
        assert_eq!(prune_count(0.0, 100), 0);
        // Genuinely fractional products still ceil.
        assert_eq!(prune_count(0.3, 10), 3);
        assert_eq!(prune_count(0.31, 10), 4);
    }

    #[test]
    fn argsort_invariance_under_positive_affine() {
        let mut rng = crate::rng::Rng::seeded(77);
        let scores: Vec<f64> = (0..40).map(|_| rng.normal()).collect();
        let mut a = vec![param(0, &scores)];
        let transformed: Vec<f64> = scores.iter().map(|s| 3.5 * s + 11.0).collect();
        let mut b = vec![param(0, &transformed)];
        for step in [0.1, 0.4, 0.83] {
            binarize_global(&mut a, step).unwrap();
            binarize_global(&mut b, step).unwrap();
            assert_eq!(a[0].mask, b[0].mask);
        }
    }

    #[test]
    fn ste_gradient_is_elementwise_product() {
        let mut p = MaskedParameter::new(0, Tensor::new(vec![2], vec![2.0, -1.5]).unwrap());
        p.mask = vec![1, 0];
        let g = Tensor::new(vec![2], vec![0.3, 0.5]).unwrap();
        let mg = ste_mask_gradient(&p, &g).unwrap();
        // flows through the masked-off position too
        assert_eq!(mg.data(), &[0.6, -0.75]);
    }

    #[test]
    fn ste_gradient_zero_weights() {
        let p = MaskedParameter::new(0, Tensor::zeros(vec![4]));
        let g = Tensor::filled(vec![4], 0.9);
        assert!(ste_mask_gradient(&p, &g)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn ste_gradient_shape_mismatch() {
        let p = MaskedParameter::new(0, Tensor::zeros(vec![4]));
        let g = Tensor::zeros(vec![5]);
        assert!(matches!(
            ste_mask_gradient(&p, &g),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn accumulator_flush_semantics() {
        let params = vec![MaskedParameter::new(0, Tensor::zeros(vec![3]))];
        let mut acc = MaskGradAccumulator::new(&params);
        assert!(acc.flush().is_none());
        acc.accumulate(0, &Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap())
            .unwrap();
        acc.accumulate(0, &Tensor::new(vec![3], vec![0.5, 0.0, -1.0]).unwrap())
            .unwrap();
        let sums = acc.flush().unwrap();
        assert_eq!(sums[0].data(), &[1.5, 2.0, 2.0]);
        assert!(acc.flush().is_none());
    }

    #[test]
    fn fingerprint_tracks_mask_changes() {
        let mut params = vec![param(0, &[0.4, 0.2, 0.9, 0.7])];
        let a = mask_fingerprint(&params);
        binarize_global(&mut params, 0.5).unwrap();
        let b = mask_fingerprint(&params);
        assert_ne!(a, b);
        binarize_global(&mut params, 0.5).unwrap();
        assert_eq!(b, mask_fingerprint(&params));
    }
}
