use crate::error::Result;
use crate::matcore::{log_det_prox, soft_threshold_matrix, SymmetricMatrix};

use super::objective::penalized_objective_scoped;
use super::trace::Recorder;
use super::{initial_iterate, relative_change, L1Scope, SolverConfig, SolverKind, SolverTrace};

/// One alternating-minimisation step on the quadratic-penalty objective:
/// `Y = Σ̂/λ − Z`, `Θ' = ½(−Y + √(YᵀY + (4/λ)I))`, `Z' = η_{ρ/λ}(Θ')`.
pub fn am_step(
    z: &SymmetricMatrix,
    sigma_hat: &SymmetricMatrix,
    rho: f64,
    lambda: f64,
    scope: L1Scope,
) -> Result<(SymmetricMatrix, SymmetricMatrix)> {
    let y = sigma_hat.scale(1.0 / lambda) - z;
    let theta = log_det_prox(&y, lambda)?.theta;
    let z_next = soft_threshold_matrix(&theta, rho / lambda, scope.includes_diagonal())?;
    Ok((theta, z_next))
}

pub fn am_solve(sigma_hat: &SymmetricMatrix, config: &SolverConfig) -> Result<SolverTrace> {
    config.validate()?;
    let scope = config.scope_for(SolverKind::Am);
    let (rho, lambda) = (config.rho, config.lambda);
    let objective = |theta: &SymmetricMatrix, z: &SymmetricMatrix| {
        penalized_objective_scoped(theta, z, sigma_hat, rho, lambda, scope)
    };

    let mut theta = initial_iterate(sigma_hat, config.init_offset_t)?;
    let mut z = theta.clone();
    let mut rec = Recorder::new(SolverKind::Am, config.record_iterates);
    rec.push(0, &theta, Some(&z), objective(&theta, &z)?);

    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=config.max_iters {
        let (theta_next, z_next) = am_step(&z, sigma_hat, rho, lambda, scope)?;
        let change = relative_change(&theta_next, &theta);
        theta = theta_next;
        z = z_next;
        iterations = k;
        rec.push(k, &theta, Some(&z), objective(&theta, &z)?);
        if change < config.tol {
            converged = true;
            break;
        }
    }
    Ok(rec.finish(iterations, converged))
}
