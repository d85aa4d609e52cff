//! Configuration, stage orchestration and benchmarking behind the `pathrec` binary.

pub mod bench;
pub mod config;
pub mod manifest;
pub mod pipeline;

pub use config::PipelineConfig;

/// Crate version plus the export record version.
pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (export schema 1)");
