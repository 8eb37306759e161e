//! Sparse precision-matrix recovery.
//!
//! Classic convex solvers for the ℓ1-penalised Gaussian log-likelihood (AM,
//! ADMM, G-ISTA and block coordinate descent), the GLAD unrolled solver with
//! learnable entry-wise thresholds and penalty schedule, its training engine,
//! synthetic problem generators and recovery metrics.

pub mod baselines;
pub mod datagen;
pub mod error;
pub mod glad_model;
pub mod matcore;
pub mod metrics;
pub mod theory;
pub mod training;

pub use error::{Error, Result};
pub use matcore::SymmetricMatrix;
