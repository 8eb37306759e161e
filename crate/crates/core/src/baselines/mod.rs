//! Classic convex solvers for the ℓ1-penalised log-determinant problem and
//! its quadratic-penalty relaxation.
//!
//! Every solver starts from `Θ₀ = (Σ̂ + tI)⁻¹` and returns a [`SolverTrace`]
//! holding the per-iteration record.

mod admm;
mod am;
mod bcd;
mod gista;
mod objective;
mod trace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{spd_inverse, SymmetricMatrix};

pub use admm::{admm_solve, admm_step, AdmmState};
pub use am::{am_solve, am_step};
pub use bcd::{bcd_solve, BCD_INNER_MAX_SWEEPS, BCD_INNER_TOL};
pub use gista::{gista_solve, gista_step, GISTA_MAX_HALVINGS};
pub use objective::{glasso_objective, glasso_objective_scoped, penalized_objective, penalized_objective_scoped};
pub use trace::{SolverTrace, TraceStep};

/// Which entries the ℓ1 penalty acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum L1Scope {
    /// `Σ_{i≠j} |Θ_ij|`, the graphical-lasso convention.
    OffDiagonal,
    /// `Σ_{ij} |Z_ij|`, as written for the quadratic-penalty splitting.
    Full,
}

impl L1Scope {
    pub fn includes_diagonal(self) -> bool {
        matches!(self, L1Scope::Full)
    }

    fn from_flag(penalize_diagonal: bool) -> Self {
        if penalize_diagonal {
            L1Scope::Full
        } else {
            L1Scope::OffDiagonal
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Am,
    Admm,
    Gista,
    Bcd,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [SolverKind::Am, SolverKind::Admm, SolverKind::Gista, SolverKind::Bcd];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Am => "am",
            SolverKind::Admm => "admm",
            SolverKind::Gista => "gista",
            SolverKind::Bcd => "bcd",
        }
    }

    /// AM and ADMM penalise the full `‖Z‖₁`; G-ISTA and BCD only off-diagonals.
    pub fn default_scope(self) -> L1Scope {
        match self {
            SolverKind::Am | SolverKind::Admm => L1Scope::Full,
            SolverKind::Gista | SolverKind::Bcd => L1Scope::OffDiagonal,
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "am" => Ok(SolverKind::Am),
            "admm" => Ok(SolverKind::Admm),
            "gista" | "g-ista" => Ok(SolverKind::Gista),
            "bcd" => Ok(SolverKind::Bcd),
            other => Err(Error::InvalidConfig(format!("unknown solver '{other}'"))),
        }
    }
}

/// Hyperparameters shared by the classic solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// ℓ1 penalty ρ.
    pub rho: f64,
    /// Quadratic / augmented penalty λ (AM and ADMM only).
    pub lambda: f64,
    /// Offset `t` of the initial iterate `(Σ̂ + tI)⁻¹`.
    pub init_offset_t: f64,
    pub max_iters: usize,
    /// Stop once `‖Θ_{k+1} − Θ_k‖_F / ‖Θ_k‖_F < tol`.
    pub tol: f64,
    /// Overrides the solver's default ℓ1 scope when set.
    pub penalize_diagonal: Option<bool>,
    /// Keep every iterate in the trace; otherwise only the last one.
    pub record_iterates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 0.1,
            lambda: 1.0,
            init_offset_t: 1.0,
            max_iters: 1000,
            tol: 1e-6,
            penalize_diagonal: None,
            record_iterates: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidConfig(format!("rho must be >= 0, got {}", self.rho)));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidConfig(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tol must be > 0, got {}", self.tol)));
        }
        if !(self.init_offset_t > 0.0) || !self.init_offset_t.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "init_offset_t must be > 0, got {}",
                self.init_offset_t
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        Ok(())
    }

    pub fn scope_for(&self, kind: SolverKind) -> L1Scope {
        self.penalize_diagonal
            .map(L1Scope::from_flag)
            .unwrap_or_else(|| kind.default_scope())
    }
}

/// Runs the named solver.
pub fn solve(kind: SolverKind, sigma_hat: &SymmetricMatrix, config: &SolverConfig) -> Result<SolverTrace> {
    match kind {
        SolverKind::Am => am_solve(sigma_hat, config),
        SolverKind::Admm => admm_solve(sigma_hat, config),
        SolverKind::Gista => gista_solve(sigma_hat, config),
        SolverKind::Bcd => bcd_solve(sigma_hat, config),
    }
}

/// `(Σ̂ + tI)⁻¹`, or `InitFailure` when the shifted matrix is not SPD.
pub fn initial_iterate(sigma_hat: &SymmetricMatrix, t: f64) -> Result<SymmetricMatrix> {
    spd_inverse(&sigma_hat.add_scaled_identity(t)).map_err(|_| {
        Error::InitFailure(format!("Σ̂ + {t}·I is not positive definite"))
    })
}

pub(crate) fn relative_change(next: &SymmetricMatrix, prev: &SymmetricMatrix) -> f64 {
    let denom = prev.frobenius_norm();
    if denom == 0.0 {
        next.frobenius_norm()
    } else {
        next.distance(prev) / denom
    }
}
