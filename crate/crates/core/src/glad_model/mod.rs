//! GLAD: alternating minimisation unrolled for a fixed number of steps, with
//! the ℓ1 threshold and the quadratic penalty produced by two small learned
//! networks.
//!
//! Each cell maps `(Θ, Z, λ)` to
//!
//! ```text
//! λ'    = Λ_nn(‖Z − Θ‖²_F, λ)
//! Y     = Σ̂/λ' − Z
//! Θ'    = ½(−Y + √(Y² + (4/λ')I))
//! ρ_ij  = ρ_nn(Θ'_ij, Σ̂_ij, Z_ij)
//! Z'_ij = η_{ρ_ij}(Θ'_ij)
//! ```
//!
//! starting from `Θ₀ = Z₀ = (Σ̂ + tI)⁻¹`, `λ₀ = 1`. With constant networks
//! this is exactly [`am_step`](crate::baselines::am_step).

mod mlp;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::initial_iterate;
use crate::error::{Error, Result};
use crate::matcore::{log_det_prox, shrink, LogDetProx, SymmetricMatrix};

pub use mlp::Mlp;

/// Layer widths of the threshold network: inputs `(Θ'_ij, Σ̂_ij, Z_ij)`.
pub const RHO_NN_DIMS: [usize; 5] = [3, 3, 3, 3, 1];
/// Layer widths of the penalty network: inputs `(‖Z − Θ‖²_F, λ)`.
pub const LAMBDA_NN_DIMS: [usize; 3] = [2, 3, 1];
/// Checkpoint schema version.
pub const PARAMS_FORMAT_VERSION: u32 = 1;
/// A penalty at or below this value aborts the forward pass.
pub const MIN_LAMBDA: f64 = 1e-12;

/// Learnable parameters of the unrolled model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsFile", into = "ParamsFile")]
pub struct GladParams {
    pub rho_nn: Mlp,
    pub lambda_nn: Mlp,
    /// Offset `t` of the initial iterate `(Σ̂ + tI)⁻¹`.
    pub init_offset_t: f64,
}

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    rho_nn: Mlp,
    lambda_nn: Mlp,
    t: f64,
    format_version: u32,
}

impl TryFrom<ParamsFile> for GladParams {
    type Error = Error;
    fn try_from(f: ParamsFile) -> Result<Self> {
        if f.format_version != PARAMS_FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "checkpoint format version {} is not supported",
                f.format_version
            )));
        }
        GladParams::new(f.rho_nn, f.lambda_nn, f.t)
    }
}

impl From<GladParams> for ParamsFile {
    fn from(p: GladParams) -> Self {
        ParamsFile {
            rho_nn: p.rho_nn,
            lambda_nn: p.lambda_nn,
            t: p.init_offset_t,
            format_version: PARAMS_FORMAT_VERSION,
        }
    }
}

impl GladParams {
    pub fn new(rho_nn: Mlp, lambda_nn: Mlp, init_offset_t: f64) -> Result<Self> {
        if rho_nn.input_dim() != 3 || lambda_nn.input_dim() != 2 {
            return Err(Error::ShapeError(format!(
                "threshold net takes 3 inputs and penalty net 2, got {} and {}",
                rho_nn.input_dim(),
                lambda_nn.input_dim()
            )));
        }
        if !init_offset_t.is_finite() {
            return Err(Error::InvalidConfig("init offset t must be finite".into()));
        }
        Ok(Self { rho_nn, lambda_nn, init_offset_t })
    }

    /// Glorot-uniform networks with `t = 1`.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Self {
            rho_nn: Mlp::xavier(&RHO_NN_DIMS, &mut rng).expect("static dims"),
            lambda_nn: Mlp::xavier(&LAMBDA_NN_DIMS, &mut rng).expect("static dims"),
            init_offset_t: 1.0,
        }
    }

    /// Networks that output `threshold` and `lambda` for every input. The
    /// resulting model runs AM with `λ = lambda` and `ρ = threshold · λ`.
    pub fn constant(threshold: f64, lambda: f64, init_offset_t: f64) -> Result<Self> {
        Self::new(
            Mlp::constant(&RHO_NN_DIMS, threshold)?,
            Mlp::constant(&LAMBDA_NN_DIMS, lambda)?,
            init_offset_t,
        )
    }

    pub fn num_params(&self) -> usize {
        self.rho_nn.num_params() + self.lambda_nn.num_params() + 1
    }

    /// Flat parameter vector: threshold net, penalty net, then `t`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.rho_nn.extend_flat(&mut out);
        self.lambda_nn.extend_flat(&mut out);
        out.push(self.init_offset_t);
        out
    }

    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.num_params() {
            return Err(Error::ShapeError(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut out = self.clone();
        let rest = out.rho_nn.read_flat(flat)?;
        let rest = out.lambda_nn.read_flat(rest)?;
        out.init_offset_t = rest[0];
        Ok(out)
    }

    /// Index of `t` in the flat layout.
    pub fn t_index(&self) -> usize {
        self.num_params() - 1
    }

    /// Offset of the penalty network in the flat layout.
    pub(crate) fn lambda_offset(&self) -> usize {
        self.rho_nn.num_params()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// The recurrence state `(Θ, Z, λ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GladState {
    pub theta: SymmetricMatrix,
    pub z: SymmetricMatrix,
    pub lambda: f64,
}

impl GladState {
    /// `Θ₀ = Z₀ = (Σ̂ + tI)⁻¹`, `λ₀ = 1`.
    pub fn initial(sigma_hat: &SymmetricMatrix, t: f64) -> Result<Self> {
        let theta = initial_iterate(sigma_hat, t)?;
        Ok(Self { z: theta.clone(), theta, lambda: 1.0 })
    }
}

/// Everything one cell computed, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct CellRecord {
    /// `‖Z − Θ‖²_F` of the incoming state.
    pub gap_sq: f64,
    pub lambda: f64,
    pub y: SymmetricMatrix,
    pub prox: LogDetProx,
    /// Per-entry thresholds, row-major.
    pub rho: Vec<f64>,
    pub z: SymmetricMatrix,
}

pub(crate) fn cell_forward(sigma_hat: &SymmetricMatrix, state: &GladState, params: &GladParams) -> Result<CellRecord> {
    if sigma_hat.dim() != state.theta.dim() || state.z.dim() != state.theta.dim() {
        return Err(Error::ShapeError(format!(
            "Σ̂ is {0}x{0} but the state is {1}x{1}",
            sigma_hat.dim(),
            state.theta.dim()
        )));
    }
    let gap_sq = state.z.distance(&state.theta).powi(2);
    let lambda = params.lambda_nn.forward(&[gap_sq, state.lambda])?;
    if !(lambda > MIN_LAMBDA) {
        return Err(Error::DegeneratePenalty(lambda));
    }
    let y = sigma_hat.scale(1.0 / lambda) - &state.z;
    let prox = log_det_prox(&y, lambda)?;
    let d = sigma_hat.dim();
    let theta = &prox.theta;
    let mut rho = vec![0.0; d * d];
    let mut z = vec![0.0; d * d];
    let mut acts = Vec::new();
    for i in 0..d {
        for j in 0..d {
            let x = theta.get(i, j);
            let tau = params.rho_nn.eval(&[x, sigma_hat.get(i, j), state.z.get(i, j)], &mut acts);
            rho[i * d + j] = tau;
            z[i * d + j] = shrink(x, tau);
        }
    }
    let z = SymmetricMatrix::new(d, z)?;
    Ok(CellRecord { gap_sq, lambda, y, prox, rho, z })
}

/// One unrolled step.
pub fn glad_cell(sigma_hat: &SymmetricMatrix, state: &GladState, params: &GladParams) -> Result<GladState> {
    let rec = cell_forward(sigma_hat, state, params)?;
    Ok(GladState { theta: rec.prox.theta, z: rec.z, lambda: rec.lambda })
}

/// Runs `num_unrolls` cells and returns the states after each one
/// (`Θ₁ … Θ_K`); the initial state is validated but not included.
pub fn glad_forward(sigma_hat: &SymmetricMatrix, params: &GladParams, num_unrolls: usize) -> Result<Vec<GladState>> {
    let mut state = GladState::initial(sigma_hat, params.init_offset_t)?;
    let mut out = Vec::with_capacity(num_unrolls);
    for _ in 0..num_unrolls {
        state = glad_cell(sigma_hat, &state, params)?;
        out.push(state.clone());
    }
    Ok(out)
}

/// Final estimate `Θ_K` (or `Θ₀` when `num_unrolls == 0`).
pub fn glad_predict(sigma_hat: &SymmetricMatrix, params: &GladParams, num_unrolls: usize) -> Result<GladState> {
    let mut state = GladState::initial(sigma_hat, params.init_offset_t)?;
    for _ in 0..num_unrolls {
        state = glad_cell(sigma_hat, &state, params)?;
    }
    Ok(state)
}
