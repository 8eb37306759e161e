use crate::error::{Error, Result};
use crate::matcore::{soft_threshold_matrix, sym_eig, CholeskyFactor, SymmetricMatrix};

use super::objective::glasso_objective_scoped;
use super::trace::Recorder;
use super::{initial_iterate, relative_change, L1Scope, SolverConfig, SolverKind, SolverTrace};

/// Backtracking budget per G-ISTA iteration.
pub const GISTA_MAX_HALVINGS: usize = 60;

/// Proximal-gradient step `η_{ξρ}(Θ − ξ(Σ̂ − Θ⁻¹))`.
pub fn gista_step(
    theta: &SymmetricMatrix,
    sigma_hat: &SymmetricMatrix,
    rho: f64,
    step_xi: f64,
    scope: L1Scope,
) -> Result<SymmetricMatrix> {
    let inv = CholeskyFactor::new(theta)?.inverse();
    prox_gradient(theta, &(sigma_hat - &inv), rho, step_xi, scope)
}

fn prox_gradient(
    theta: &SymmetricMatrix,
    grad: &SymmetricMatrix,
    rho: f64,
    step_xi: f64,
    scope: L1Scope,
) -> Result<SymmetricMatrix> {
    if !(step_xi > 0.0) {
        return Err(Error::InvalidConfig(format!("step size must be positive, got {step_xi}")));
    }
    soft_threshold_matrix(&(theta - &grad.scale(step_xi)), step_xi * rho, scope.includes_diagonal())
}

/// `−log det Θ + tr(Σ̂Θ)`, or `None` outside the SPD cone.
fn smooth_part(theta: &SymmetricMatrix, sigma_hat: &SymmetricMatrix) -> Option<(f64, CholeskyFactor)> {
    let chol = CholeskyFactor::new(theta).ok()?;
    Some((-chol.log_det() + sigma_hat.frobenius_dot(theta), chol))
}

/// `f(Θ + Δ) − f(Θ) − ⟨∇f(Θ), Δ⟩` for the smooth part, which reduces to
/// `Σ a_i − ln(1 + a_i)` over the eigenvalues of `L⁻¹ Δ L⁻ᵀ` (`Θ = LLᵀ`).
/// Evaluated this way it stays accurate when `Δ` is tiny, where differencing
/// objective values would be swamped by rounding.
fn bregman_gap(chol: &CholeskyFactor, diff: &SymmetricMatrix) -> Result<f64> {
    let whitened = sym_eig(&chol.whiten(diff))?;
    Ok(whitened
        .eigenvalues()
        .iter()
        .map(|&a| if a > -1.0 { a - a.ln_1p() } else { f64::INFINITY })
        .sum())
}

/// G-ISTA with backtracking. Each step starts from the previously accepted
/// ξ doubled (the first from `1/Λ_max(Σ̂ + tI)`) and halves until the
/// candidate is SPD and satisfies the quadratic upper-bound test
/// `f(Θ⁺) ≤ f(Θ) + ⟨∇f(Θ), Θ⁺ − Θ⟩ + ‖Θ⁺ − Θ‖²_F / (2ξ)`.
pub fn gista_solve(sigma_hat: &SymmetricMatrix, config: &SolverConfig) -> Result<SolverTrace> {
    config.validate()?;
    let scope = config.scope_for(SolverKind::Gista);
    let rho = config.rho;
    let shifted = sigma_hat.add_scaled_identity(config.init_offset_t);
    let mut theta = initial_iterate(sigma_hat, config.init_offset_t)?;
    let mut xi = 1.0 / sym_eig(&shifted)?.max_abs_eigenvalue();

    let mut rec = Recorder::new(SolverKind::Gista, config.record_iterates);
    rec.push(0, &theta, None, glasso_objective_scoped(&theta, sigma_hat, rho, scope)?);

    let mut chol = CholeskyFactor::new(&theta)?;
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=config.max_iters {
        if k > 1 {
            xi *= 2.0;
        }
        let grad = sigma_hat - &chol.inverse();
        let mut accepted = None;
        for _ in 0..=GISTA_MAX_HALVINGS {
            let candidate = prox_gradient(&theta, &grad, rho, xi, scope)?;
            if let Some((f_cand, chol_cand)) = smooth_part(&candidate, sigma_hat) {
                let diff = &candidate - &theta;
                if bregman_gap(&chol, &diff)? <= diff.frobenius_norm_sq() / (2.0 * xi) {
                    accepted = Some((candidate, f_cand, chol_cand));
                    break;
                }
            }
            xi *= 0.5;
        }
        let (next, f_next, chol_next) = accepted.ok_or(Error::LineSearchFailure(GISTA_MAX_HALVINGS))?;
        let change = relative_change(&next, &theta);
        theta = next;
        chol = chol_next;
        iterations = k;
        let obj = f_next + rho * theta.l1_norm(scope.includes_diagonal());
        rec.push(k, &theta, None, obj);
        if change < config.tol {
            converged = true;
            break;
        }
    }
    Ok(rec.finish(iterations, converged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::test_support::random_spd;
    use crate::matcore::{is_spd, spd_inverse};

    #[test]
    fn inverse_is_fixed_point_without_penalty() {
        let theta = random_spd(5, 1);
        let sigma = spd_inverse(&theta).unwrap();
        let next = gista_step(&theta, &sigma, 0.0, 0.3, L1Scope::OffDiagonal).unwrap();
        assert!(next.distance(&theta) < 1e-10);
    }

    #[test]
    fn scalar_arithmetic_step() {
        let theta = SymmetricMatrix::scaled_identity(3, 2.0);
        let next = gista_step(&theta, &SymmetricMatrix::identity(3), 0.0, 1.0, L1Scope::OffDiagonal).unwrap();
        assert!(next.distance(&SymmetricMatrix::scaled_identity(3, 1.5)) < 1e-15);
    }

    #[test]
    fn step_rejects_indefinite_theta() {
        let theta = SymmetricMatrix::from_diagonal(&[1.0, -1.0]).unwrap();
        assert!(matches!(
            gista_step(&theta, &SymmetricMatrix::identity(2), 0.1, 0.5, L1Scope::OffDiagonal),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn identity_converges_to_identity() {
        let i = SymmetricMatrix::identity(4);
        let cfg = SolverConfig { rho: 0.0, tol: 1e-12, ..Default::default() };
        let trace = gista_solve(&i, &cfg).unwrap();
        assert!(trace.converged);
        assert!(trace.final_theta().distance(&i) < 1e-9);
    }

    #[test]
    fn objective_monotone_and_iterates_spd() {
        for seed in 0..10 {
            let sigma = random_spd(7, seed).scale(0.25);
            let cfg = SolverConfig { rho: 0.1, tol: 1e-10, max_iters: 500, ..Default::default() };
            let trace = gista_solve(&sigma, &cfg).unwrap();
            for w in trace.objectives.windows(2) {
                assert!(w[1] <= w[0] + 1e-10 * w[0].abs().max(1.0));
            }
            assert!(trace.iterates.iter().all(|s| is_spd(&s.theta)));
        }
    }
}
