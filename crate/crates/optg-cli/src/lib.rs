//! IO, file formats, and the experiment CLI around `optg-core`: dataset
//! ingestion (IDX, CIFAR-10 binary, cache), synthetic corpus generation,
//! run configuration, presets, metric export, checkpointing, and reports.

mod binio;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod formats;
pub mod report;
pub mod runner;
pub mod synthgen;
mod testutil;

pub use config::RunConfig;
pub use error::{CliError, Result};
