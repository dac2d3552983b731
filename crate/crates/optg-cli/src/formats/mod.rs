//! On-disk dataset formats: IDX, CIFAR-10 binary, and the cache format.

pub mod cache;
pub mod cifar;
pub mod idx;
