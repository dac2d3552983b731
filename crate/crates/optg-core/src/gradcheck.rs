//! Central finite-difference gradient checking for whole networks.
//!
//! Only the forward pass and the loss value are used on the numeric side,
//! so this is an oracle for `backward`, not a consumer of it.

use crate::error::Result;
use crate::loss::softmax_cross_entropy;
use crate::math;
use crate::nn::{GradientTape, Network, Params};
use crate::tensor::Tensor;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
}

fn loss_value(network: &Network, params: &Params, x: &Tensor, labels: &[usize]) -> Result<f64> {
    let logits = network.forward(params, x, None)?;
    Ok(softmax_cross_entropy(&logits, labels)?.0)
}

/// Compares analytic gradients (parameters and input) against central
/// differences of the cross-entropy loss with the given step.
///
/// The error is relative to the larger of the two values, floored at 1e-3
/// of the largest analytic gradient so near-zero coordinates are judged on
/// the gradient's own scale rather than on finite-difference noise.
pub fn check_network_gradients(
    network: &Network,
    params: &Params,
    x: &Tensor,
    labels: &[usize],
    step: f64,
) -> Result<GradCheckReport> {
    let mut tape = GradientTape::new();
    let logits = network.forward(params, x, Some(&mut tape))?;
    let (_, grad_logits) = softmax_cross_entropy(&logits, labels)?;
    let (grad_in, grads) = network.backward(params, &mut tape, &grad_logits)?;

    // Collect (analytic value, perturbation target) pairs lazily via
    // closures over coordinate addresses.
    let mut analytic: Vec<f64> = Vec::new();
    for slot in grads.layers.iter().flatten() {
        analytic.extend_from_slice(slot.weight.data());
        analytic.extend_from_slice(slot.bias.data());
    }
    analytic.extend_from_slice(grad_in.data());
    let scale = analytic
        .iter()
        .fold(0.0_f64, |acc, &v| acc.max(math::abs(v)));
    let floor = (1e-3 * scale).max(1e-12);

    let mut max_rel = 0.0_f64;
    let mut checked = 0usize;
    let mut cursor = 0usize;

    // Parameters.
    for (li, slot) in grads.layers.iter().enumerate() {
        let Some(gp) = slot else { continue };
        for which in 0..2 {
            let len = if which == 0 {
                gp.weight.len()
            } else {
                gp.bias.len()
            };
            for i in 0..len {
                let a = analytic[cursor + i];
                let mut work = params.clone();
                let target = work.layers[li].as_mut().unwrap();
                let slot_data = if which == 0 {
                    target.weight.data_mut()
                } else {
                    target.bias.data_mut()
                };
                let orig = slot_data[i];
                slot_data[i] = orig + step;
                let up = loss_value(network, &work, x, labels)?;
                let target = work.layers[li].as_mut().unwrap();
                let slot_data = if which == 0 {
                    target.weight.data_mut()
                } else {
                    target.bias.data_mut()
                };
                slot_data[i] = orig - step;
                let down = loss_value(network, &work, x, labels)?;
                let fd = (up - down) / (2.0 * step);
                let rel = math::abs(a - fd) / math::abs(a).max(math::abs(fd)).max(floor);
                max_rel = max_rel.max(rel);
                checked += 1;
            }
            cursor += len;
        }
    }

    // Input coordinates.
    for i in 0..grad_in.len() {
        let a = analytic[cursor + i];
        let mut work = x.clone();
        let orig = work.data()[i];
        work.data_mut()[i] = orig + step;
        let up = loss_value(network, params, &work, labels)?;
        work.data_mut()[i] = orig - step;
        let down = loss_value(network, params, &work, labels)?;
        let fd = (up - down) / (2.0 * step);
        let rel = math::abs(a - fd) / math::abs(a).max(math::abs(fd)).max(floor);
        max_rel = max_rel.max(rel);
        checked += 1;
    }

    Ok(GradCheckReport {
        max_rel_err: max_rel,
        coords_checked: checked,
    })
}
