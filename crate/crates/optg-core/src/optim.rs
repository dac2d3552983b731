//! SGD with momentum and weight decay, plus the masked variant that leaves
//! pruned positions untouched.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl SgdConfig {
    pub fn plain(lr: f64) -> Self {
        SgdConfig {
            lr,
            momentum: 0.0,
            weight_decay: 0.0,
        }
    }
}

fn check_shapes(velocity: &Tensor, param: &Tensor, grad: &Tensor) -> Result<()> {
    if !param.same_shape(grad) || !param.same_shape(velocity) {
        return Err(Error::dimension(format_args!(
            "sgd shapes: param {:?}, grad {:?}, velocity {:?}",
            param.shape(),
            grad.shape(),
            velocity.shape()
        )));
    }
    Ok(())
}

/// `v <- momentum v + g + weight_decay p; p <- p - lr v`.
pub fn sgd_step(
    cfg: &SgdConfig,
    velocity: &mut Tensor,
    param: &mut Tensor,
    grad: &Tensor,
) -> Result<()> {
    check_shapes(velocity, param, grad)?;
    let v = velocity.data_mut();
    let p = param.data_mut();
    let g = grad.data();
    for i in 0..p.len() {
        v[i] = cfg.momentum * v[i] + g[i] + cfg.weight_decay * p[i];
        p[i] -= cfg.lr * v[i];
    }
    Ok(())
}

/// SGD restricted to active (mask = 1) positions. Pruned weights receive no
/// gradient, no decay, and no momentum drift; their stored value and
/// velocity are frozen until revival.
pub fn sgd_step_masked(
    cfg: &SgdConfig,
    velocity: &mut Tensor,
    param: &mut Tensor,
    grad: &Tensor,
    mask: &[u8],
) -> Result<()> {
    check_shapes(velocity, param, grad)?;
    if mask.len() != param.len() {
        return Err(Error::dimension("mask length mismatch"));
    }
    let v = velocity.data_mut();
    let p = param.data_mut();
    let g = grad.data();
    for i in 0..p.len() {
        if mask[i] == 1 {
            v[i] = cfg.momentum * v[i] + g[i] + cfg.weight_decay * p[i];
            p[i] -= cfg.lr * v[i];
        }
    }
    Ok(())
}
