//! Experiment orchestration on top of `glad-core`: dataset generation,
//! solver runs and grid sweeps, GLAD training and evaluation, and the
//! numerical property suites. Results are tidy CSV; every output directory
//! also holds the effective config and its SHA-256.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use error::{HarnessError, Result};
