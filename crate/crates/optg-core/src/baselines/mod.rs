//! Comparison pruners and analysis experiments: one-shot first-order
//! saliency, magnitude ranking, layer-budget modes, prune-and-retrain
//! cycles, and direct measurement of the gap between per-weight loss-change
//! predictions and the actual loss change of group removal.

pub mod budget;
pub mod cycles;
pub mod paradox;
pub mod saliency;

pub use budget::{layer_budget, BudgetMode};
pub use cycles::{cycle_experiment, CycleConfig, CycleOutcome};
pub use paradox::{
    measure_paradox_gap, NetworkBatchLoss, ParadoxFineTune, ParadoxReport, ParadoxRow,
    SaliencyLoss,
};
pub use saliency::{
    first_order_saliency, magnitude_saliency, one_shot_prune, SaliencyCriterion, SaliencyScore,
};
