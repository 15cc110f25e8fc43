//! Experiment harness for switch-type policy networks: configuration,
//! study drivers, evaluation, summaries and file formats.
//!
//! The algorithms live in `switchnet-core`; this crate adds threads, files
//! and the `switchnet` command-line tool.

pub mod config;
pub mod eval;
pub mod io;
pub mod metrics;
pub mod study;

pub use config::ExperimentConfig;
