//! Closed-form training schedules: the sigmoid sparsity ramp, the cubic
//! alternative, cosine-annealed weight learning rate, and the
//! sparsity-coupled mask learning rate.

use crate::error::{Error, Result};
use crate::math;

/// Shape of the target-sparsity progression over epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    /// `P_k = P / (1 + e^(-alpha (k - 0.5 tau)))`: slow start, fast middle,
    /// saturating at the target.
    Sigmoid,
    /// `P_k = P (1 - (1 - k/k_f)^3)` for `k <= k_f`, then `P`: fast start,
    /// classic gradual-magnitude-pruning ramp.
    ZhuCubic { ramp_end: usize },
}

/// Target-sparsity schedule `(P, alpha, tau)` evaluated per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsitySchedule {
    /// Final sparsity fraction. `0` is the degenerate dense schedule.
    pub target: f64,
    /// Steepness of the sigmoid ascent.
    pub alpha: f64,
    /// Total training epochs.
    pub total_epochs: usize,
    /// Absolute snap-to-target tolerance near the end of the ramp.
    pub clamp_eps: f64,
    pub kind: ScheduleKind,
}

impl SparsitySchedule {
    pub fn sigmoid(target: f64, alpha: f64, total_epochs: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&target) {
            return Err(Error::config(format_args!(
                "target sparsity {target} must be in [0, 1)"
            )));
        }
        if alpha <= 0.0 {
            return Err(Error::config("alpha must be positive"));
        }
        if total_epochs == 0 {
            return Err(Error::config("schedule needs at least one epoch"));
        }
        Ok(SparsitySchedule {
            target,
            alpha,
            total_epochs,
            clamp_eps: 1e-6 * target,
            kind: ScheduleKind::Sigmoid,
        })
    }

    pub fn zhu_cubic(target: f64, total_epochs: usize, ramp_end: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&target) {
            return Err(Error::config(format_args!(
                "target sparsity {target} must be in [0, 1)"
            )));
        }
        if total_epochs == 0 || ramp_end == 0 || ramp_end > total_epochs {
            return Err(Error::config(format_args!(
                "cubic ramp end {ramp_end} must lie in [1, {total_epochs}]"
            )));
        }
        Ok(SparsitySchedule {
            target,
            alpha: 0.0,
            total_epochs,
            clamp_eps: 0.0,
            kind: ScheduleKind::ZhuCubic { ramp_end },
        })
    }

    fn check_epoch(&self, k: usize) -> Result<()> {
        if k > self.total_epochs {
            return Err(Error::input(format_args!(
                "epoch {k} past schedule end {}",
                self.total_epochs
            )));
        }
        Ok(())
    }

    /// Schedule value before the snap-to-target clamp.
    pub fn sparsity_pre_clamp(&self, k: usize) -> Result<f64> {
        self.check_epoch(k)?;
        Ok(match self.kind {
            ScheduleKind::Sigmoid => {
                let x = self.alpha * (k as f64 - 0.5 * self.total_epochs as f64);
                self.target * sigmoid(x)
            }
            ScheduleKind::ZhuCubic { ramp_end } => {
                if k >= ramp_end {
                    self.target
                } else {
                    let r = 1.0 - k as f64 / ramp_end as f64;
                    self.target * (1.0 - r * r * r)
                }
            }
        })
    }

    /// Sparsity at epoch `k`, clamped to exactly the target once the ramp is
    /// within `clamp_eps` of it.
    pub fn sparsity_at_epoch(&self, k: usize) -> Result<f64> {
        let v = self.sparsity_pre_clamp(k)?;
        if self.target - v <= self.clamp_eps {
            Ok(self.target)
        } else {
            Ok(v)
        }
    }

    /// Mask-to-weight learning-rate ratio: `P_k / P`, the shared sigmoid of
    /// the sparsity ramp. Dense schedules (P = 0) train masks at full rate.
    pub fn mask_lr_ratio(&self, k: usize) -> Result<f64> {
        self.check_epoch(k)?;
        match self.kind {
            ScheduleKind::Sigmoid => {
                let x = self.alpha * (k as f64 - 0.5 * self.total_epochs as f64);
                Ok(sigmoid(x))
            }
            ScheduleKind::ZhuCubic { .. } => {
                if self.target == 0.0 {
                    Ok(1.0)
                } else {
                    Ok(self.sparsity_pre_clamp(k)? / self.target)
                }
            }
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + math::exp(-x))
    } else {
        let e = math::exp(x);
        e / (1.0 + e)
    }
}

/// Cosine-annealed weight learning rate over one cycle of `total_epochs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub eta0: f64,
    pub total_epochs: usize,
}

impl LrSchedule {
    pub fn new(eta0: f64, total_epochs: usize) -> Result<Self> {
        if eta0 < 0.0 {
            return Err(Error::config("learning rate must be nonnegative"));
        }
        if total_epochs == 0 {
            return Err(Error::config("schedule needs at least one epoch"));
        }
        Ok(LrSchedule { eta0, total_epochs })
    }

    /// `0.5 eta0 (1 + cos(pi k / tau))`.
    pub fn weight_lr_at_epoch(&self, k: usize) -> Result<f64> {
        if k > self.total_epochs {
            return Err(Error::input(format_args!(
                "epoch {k} past schedule end {}",
                self.total_epochs
            )));
        }
        let t = core::f64::consts::PI * k as f64 / self.total_epochs as f64;
        Ok(0.5 * self.eta0 * (1.0 + math::cos(t)))
    }

    /// Mask learning rate: the weight rate scaled by the sparsity ramp's
    /// sigmoid, so mask steps stay small while saliency estimates are
    /// unreliable.
    pub fn mask_lr_at_epoch(&self, sparsity: &SparsitySchedule, k: usize) -> Result<f64> {
        Ok(self.weight_lr_at_epoch(k)? * sparsity.mask_lr_ratio(k)?)
    }
}
