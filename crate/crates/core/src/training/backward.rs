use crate::error::{Error, Result};
use crate::glad_model::{cell_forward, CellRecord, GladParams, GladState};
use crate::matcore::{sylvester_sqrt_grad_with, SpectralDecomposition, SymmetricMatrix};

/// Adjoint of `X ↦ √X` given the decomposition of `S = √X` and `∂L/∂S`.
pub type SqrtGradFn = fn(&SpectralDecomposition, &SymmetricMatrix) -> Result<SymmetricMatrix>;

/// Flat gradient with the layout of [`GladParams::to_flat`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle(pub Vec<f64>);

impl GradientBundle {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }

    pub fn add_assign(&mut self, other: &GradientBundle) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.0.iter_mut().for_each(|g| *g *= c);
    }

    /// Rescales to global norm `max_norm` when it is exceeded.
    pub fn clip(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm {
            self.scale(max_norm / n);
        }
    }
}

/// Forward pass with every intermediate kept.
#[derive(Debug, Clone)]
pub(crate) struct Tape {
    pub init: GladState,
    pub cells: Vec<CellRecord>,
}

impl Tape {
    pub fn record(sigma_hat: &SymmetricMatrix, params: &GladParams, num_unrolls: usize) -> Result<Self> {
        let init = GladState::initial(sigma_hat, params.init_offset_t)?;
        let mut cells = Vec::with_capacity(num_unrolls);
        let mut state = init.clone();
        for _ in 0..num_unrolls {
            let rec = cell_forward(sigma_hat, &state, params)?;
            state = GladState { theta: rec.prox.theta.clone(), z: rec.z.clone(), lambda: rec.lambda };
            cells.push(rec);
        }
        Ok(Self { init, cells })
    }

    pub fn theta(&self, k: usize) -> &SymmetricMatrix {
        if k == 0 {
            &self.init.theta
        } else {
            &self.cells[k - 1].prox.theta
        }
    }

    pub fn z(&self, k: usize) -> &SymmetricMatrix {
        if k == 0 {
            &self.init.z
        } else {
            &self.cells[k - 1].z
        }
    }

    pub fn lambda(&self, k: usize) -> f64 {
        if k == 0 {
            self.init.lambda
        } else {
            self.cells[k - 1].lambda
        }
    }

    /// `Σ_k γ^{K−k} ‖Θ_k − Θ*‖²_F`.
    pub fn loss(&self, theta_star: &SymmetricMatrix, gamma: f64) -> f64 {
        let big_k = self.cells.len();
        (1..=big_k)
            .map(|k| gamma.powi((big_k - k) as i32) * self.theta(k).distance(theta_star).powi(2))
            .sum()
    }

    /// Which entries passed their threshold, per cell; used to detect probes
    /// that straddle a soft-threshold kink.
    pub fn active_pattern(&self) -> Vec<bool> {
        self.cells
            .iter()
            .flat_map(|c| c.prox.theta.as_slice().iter().zip(&c.rho).map(|(x, t)| x.abs() > *t))
            .collect()
    }

    /// Smallest `| |Θ'_ij| − ρ_ij |` over all cells.
    pub fn kink_margin(&self) -> f64 {
        self.cells
            .iter()
            .flat_map(|c| c.prox.theta.as_slice().iter().zip(&c.rho).map(|(x, t)| (x.abs() - t).abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

fn finite(m: Vec<f64>, d: usize) -> Result<SymmetricMatrix> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::GradientOverflow);
    }
    SymmetricMatrix::new(d, m)
}

/// Reverse-mode sweep through a recorded forward pass.
pub(crate) fn backward_tape(
    tape: &Tape,
    sigma_hat: &SymmetricMatrix,
    theta_star: &SymmetricMatrix,
    params: &GladParams,
    gamma: f64,
    sqrt_grad: SqrtGradFn,
) -> Result<GradientBundle> {
    let d = sigma_hat.dim();
    let big_k = tape.cells.len();
    let mut grad = GradientBundle::zeros(params.num_params());
    let lambda_off = params.lambda_offset();
    let (rho_grad, rest) = grad.0.split_at_mut(lambda_off);
    let lambda_grad = &mut rest[..params.lambda_nn.num_params()];

    // Adjoints of the state leaving the cell currently being reversed.
    let mut g_theta = SymmetricMatrix::zeros(d);
    let mut g_z = SymmetricMatrix::zeros(d);
    let mut g_lambda = 0.0;
    let mut acts = Vec::new();
    let mut gin3 = [0.0; 3];
    let mut gin2 = [0.0; 2];

    for k in (1..=big_k).rev() {
        let rec = &tape.cells[k - 1];
        let theta_prev = tape.theta(k - 1);
        let z_prev = tape.z(k - 1);
        let lambda_prev = tape.lambda(k - 1);
        let theta = &rec.prox.theta;

        let weight = 2.0 * gamma.powi((big_k - k) as i32);
        g_theta += &(theta - theta_star).scale(weight);

        // Z'_ij = η(Θ'_ij, ρ_ij), ρ_ij = ρ_nn(Θ'_ij, Σ̂_ij, Z_ij).
        let mut g_theta_full = g_theta.as_slice().to_vec();
        let mut g_z_prev = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let idx = i * d + j;
                let x = theta.get(i, j);
                if x.abs() <= rec.rho[idx] {
                    continue;
                }
                let gz = g_z.get(i, j);
                g_theta_full[idx] += gz;
                let g_tau = -x.signum() * gz;
                if g_tau != 0.0 {
                    params.rho_nn.eval(&[x, sigma_hat.get(i, j), z_prev.get(i, j)], &mut acts);
                    params.rho_nn.backprop(&acts, g_tau, rho_grad, &mut gin3);
                    g_theta_full[idx] += gin3[0];
                    g_z_prev[idx] += gin3[2];
                }
            }
        }
        let g_theta_cell = finite(g_theta_full, d)?;

        // Θ' = ½(−Y + S), S = √X, X = Y² + (4/λ')I.
        let g_s = g_theta_cell.scale(0.5);
        let g_x = sqrt_grad(&rec.prox.sqrt_term, &g_s)?;
        let g_y = g_theta_cell.scale(-0.5) + g_x.anticommutator(&rec.y);
        let c_bar = g_x.trace();

        // Y = Σ̂/λ' − Z.
        let lam = rec.lambda;
        let g_lam = g_lambda - g_y.frobenius_dot(sigma_hat) / (lam * lam) - 4.0 * c_bar / (lam * lam);
        if !g_lam.is_finite() {
            return Err(Error::GradientOverflow);
        }

        // λ' = Λ_nn(‖Z − Θ‖²_F, λ).
        params.lambda_nn.eval(&[rec.gap_sq, lambda_prev], &mut acts);
        params.lambda_nn.backprop(&acts, g_lam, lambda_grad, &mut gin2);
        let diff = z_prev - theta_prev;
        let mut g_z_next = finite(g_z_prev, d)? - &g_y;
        g_z_next += &diff.scale(2.0 * gin2[0]);
        g_theta = diff.scale(-2.0 * gin2[0]);
        g_z = g_z_next;
        g_lambda = gin2[1];
    }

    // Θ₀ = Z₀ = (Σ̂ + tI)⁻¹, so ∂Θ₀/∂t = −Θ₀².
    if big_k > 0 {
        let g0 = &g_theta + &g_z;
        let t_idx = params.t_index();
        grad.0[t_idx] = -g0.frobenius_dot(&tape.init.theta.square());
    }
    if !grad.is_finite() {
        return Err(Error::GradientOverflow);
    }
    Ok(grad)
}

/// The default adjoint: the Sylvester solve in the eigenbasis of `S`.
pub fn sylvester_adjoint(s: &SpectralDecomposition, g: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    sylvester_sqrt_grad_with(s, g)
}
