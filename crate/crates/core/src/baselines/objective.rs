use crate::error::Result;
use crate::matcore::{log_det_spd, SymmetricMatrix};

use super::L1Scope;

/// `−log det Θ + tr(Σ̂Θ) + ρ Σ_{i≠j} |Θ_ij|`.
pub fn glasso_objective(theta: &SymmetricMatrix, sigma_hat: &SymmetricMatrix, rho: f64) -> Result<f64> {
    glasso_objective_scoped(theta, sigma_hat, rho, L1Scope::OffDiagonal)
}

pub fn glasso_objective_scoped(
    theta: &SymmetricMatrix,
    sigma_hat: &SymmetricMatrix,
    rho: f64,
    scope: L1Scope,
) -> Result<f64> {
    let log_det = log_det_spd(theta)?;
    Ok(-log_det + sigma_hat.frobenius_dot(theta) + rho * theta.l1_norm(scope.includes_diagonal()))
}

/// `−log det Θ + tr(Σ̂Θ) + ρ‖Z‖₁ + (λ/2)‖Z − Θ‖²_F` with the full ℓ1 norm on `Z`.
pub fn penalized_objective(
    theta: &SymmetricMatrix,
    z: &SymmetricMatrix,
    sigma_hat: &SymmetricMatrix,
    rho: f64,
    lambda: f64,
) -> Result<f64> {
    penalized_objective_scoped(theta, z, sigma_hat, rho, lambda, L1Scope::Full)
}

pub fn penalized_objective_scoped(
    theta: &SymmetricMatrix,
    z: &SymmetricMatrix,
    sigma_hat: &SymmetricMatrix,
    rho: f64,
    lambda: f64,
    scope: L1Scope,
) -> Result<f64> {
    let log_det = log_det_spd(theta)?;
    Ok(-log_det
        + sigma_hat.frobenius_dot(theta)
        + rho * z.l1_norm(scope.includes_diagonal())
        + 0.5 * lambda * z.distance(theta).powi(2))
}
