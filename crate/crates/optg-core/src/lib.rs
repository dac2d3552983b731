//! Training-time neural-network sparsification built around jointly learned
//! weights and mask scores.
//!
//! The crate provides a small dense-tensor stack (linear, 2-D convolution,
//! ReLU, max-pooling, softmax cross-entropy with exact reverse-mode
//! gradients), masked-parameter bookkeeping with global top-k binarization
//! and straight-through mask gradients, closed-form sparsity/learning-rate
//! schedules, SGD training loops, and baseline pruners plus analysis
//! harnesses for comparing them.
//!
//! Everything is `f64`, deterministic under a fixed seed, and free of IO;
//! the crate builds without `std` (`--no-default-features --features libm`).

#![cfg_attr(not(feature = "std"), no_std)]

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("optg-core requires either the `std` or the `libm` feature");

extern crate alloc;

pub mod baselines;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod masking;
mod math;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod schedules;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
