use crate::error::Result;
use crate::matcore::{log_det_prox, soft_threshold_matrix, SymmetricMatrix};

use super::objective::glasso_objective_scoped;
use super::trace::Recorder;
use super::{initial_iterate, relative_change, L1Scope, SolverConfig, SolverKind, SolverTrace};

/// Primal pair and scaled dual variable `U = β/λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub theta: SymmetricMatrix,
    pub z: SymmetricMatrix,
    pub u: SymmetricMatrix,
}

/// `Y = Σ̂/λ − Z + U`, `Θ' = ½(−Y + √(YᵀY + (4/λ)I))`,
/// `Z' = η_{ρ/λ}(Θ' + U)`, `U' = U + Θ' − Z'`.
pub fn admm_step(
    state: &AdmmState,
    sigma_hat: &SymmetricMatrix,
    rho: f64,
    lambda: f64,
    scope: L1Scope,
) -> Result<AdmmState> {
    let y = sigma_hat.scale(1.0 / lambda) - &state.z + &state.u;
    let theta = log_det_prox(&y, lambda)?.theta;
    let z = soft_threshold_matrix(&(&theta + &state.u), rho / lambda, scope.includes_diagonal())?;
    let u = &state.u + &theta - &z;
    Ok(AdmmState { theta, z, u })
}

/// ADMM with `U₀ = 0`; stops when both the relative Θ change and the
/// relative primal residual `‖Θ − Z‖_F / ‖Θ‖_F` fall below `tol`.
pub fn admm_solve(sigma_hat: &SymmetricMatrix, config: &SolverConfig) -> Result<SolverTrace> {
    config.validate()?;
    let scope = config.scope_for(SolverKind::Admm);
    let (rho, lambda) = (config.rho, config.lambda);
    let objective = |theta: &SymmetricMatrix| glasso_objective_scoped(theta, sigma_hat, rho, scope);

    let theta0 = initial_iterate(sigma_hat, config.init_offset_t)?;
    let d = sigma_hat.dim();
    let mut state = AdmmState {
        z: theta0.clone(),
        theta: theta0,
        u: SymmetricMatrix::zeros(d),
    };
    let mut rec = Recorder::new(SolverKind::Admm, config.record_iterates);
    rec.push(0, &state.theta, Some(&state.z), objective(&state.theta)?);

    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=config.max_iters {
        let next = admm_step(&state, sigma_hat, rho, lambda, scope)?;
        let change = relative_change(&next.theta, &state.theta);
        let residual = next.theta.distance(&next.z) / next.theta.frobenius_norm();
        state = next;
        iterations = k;
        rec.push(k, &state.theta, Some(&state.z), objective(&state.theta)?);
        if change < config.tol && residual < config.tol {
            converged = true;
            break;
        }
    }
    Ok(rec.finish(iterations, converged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::am_step;
    use crate::matcore::test_support::random_spd;
    use crate::matcore::is_spd;

    #[test]
    fn zero_dual_matches_am_theta_update() {
        let i = SymmetricMatrix::identity(3);
        let zero = SymmetricMatrix::zeros(3);
        let state = AdmmState { theta: i.clone(), z: zero.clone(), u: zero.clone() };
        let next = admm_step(&state, &i, 0.0, 1.0, L1Scope::Full).unwrap();
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        assert!(next.theta.distance(&i.scale(golden)) < 1e-12);

        let sigma = random_spd(6, 3);
        let z = random_spd(6, 4).scale(0.1);
        let state = AdmmState { theta: i.clone(), z: z.clone(), u: SymmetricMatrix::zeros(6) };
        let (am_theta, _) = am_step(&z, &sigma, 0.1, 2.0, L1Scope::Full).unwrap();
        let next = admm_step(&state, &sigma, 0.1, 2.0, L1Scope::Full).unwrap();
        assert_eq!(next.theta, am_theta);
    }

    #[test]
    fn diagonal_rho_zero_converges_to_inverse() {
        let sigma = SymmetricMatrix::from_diagonal(&[2.0, 4.0]).unwrap();
        let cfg = SolverConfig { rho: 0.0, lambda: 1.0, tol: 1e-12, max_iters: 5000, ..Default::default() };
        let trace = admm_solve(&sigma, &cfg).unwrap();
        assert!(trace.converged);
        let expected = SymmetricMatrix::from_diagonal(&[0.5, 0.25]).unwrap();
        assert!(trace.final_theta().distance(&expected) < 1e-9);
    }

    #[test]
    fn fixed_point_has_theta_equal_z() {
        let sigma = random_spd(10, 21).scale(0.1);
        let cfg = SolverConfig { rho: 0.1, lambda: 1.0, tol: 1e-10, max_iters: 20_000, ..Default::default() };
        let trace = admm_solve(&sigma, &cfg).unwrap();
        assert!(trace.converged);
        let last = trace.final_step();
        assert!(last.theta.distance(last.z.as_ref().unwrap()) < 1e-5);
        assert!(trace.iterates.iter().all(|s| is_spd(&s.theta)));
    }
}
