//! Synthetic problem instances: sparse precision matrices, Gaussian samples
//! drawn from them, and the resulting empirical covariances.
//!
//! Randomness comes from ChaCha20 (`rand_chacha`), keyed by the dataset seed
//! via `seed_from_u64`. Each instance gets its own stream per purpose
//! (`stream = index << 8 | purpose`), so instances are independent of one
//! another and of the order in which they are generated.

mod io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{sym_eig, CholeskyFactor, SymmetricMatrix};

pub use io::{load_dataset, read_instance, save_dataset, write_instance, DatasetManifest, DATASET_FORMAT_VERSION};

/// Stream purposes within one instance.
const STREAM_GRAPH: u64 = 0;
const STREAM_SAMPLES: u64 = 1;
const STREAM_SPARSITY: u64 = 2;

/// Sparsity range for mixed Erdős–Rényi datasets.
pub const MIXED_SPARSITY_RANGE: (f64, f64) = (0.05, 0.15);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorTag {
    ErdosFixed,
    ErdosMixed,
    Grid,
    RestrictedRandom,
}

impl GeneratorTag {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorTag::ErdosFixed => "erdos_fixed",
            GeneratorTag::ErdosMixed => "erdos_mixed",
            GeneratorTag::Grid => "grid",
            GeneratorTag::RestrictedRandom => "restricted_random",
        }
    }

    fn default_weights(self) -> (f64, f64) {
        match self {
            GeneratorTag::ErdosFixed | GeneratorTag::ErdosMixed => (-1.0, 1.0),
            GeneratorTag::Grid => (0.12, 0.25),
            GeneratorTag::RestrictedRandom => (0.1, 0.4),
        }
    }
}

impl std::fmt::Display for GeneratorTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Declarative description of a family of random graphs and sample draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFamilyConfig {
    pub generator: GeneratorTag,
    pub d: usize,
    /// Edge probability for `erdos_fixed` and `restricted_random`.
    #[serde(default)]
    pub p: Option<f64>,
    /// Per-graph edge probability range for `erdos_mixed`.
    #[serde(default)]
    pub p_range: Option<(f64, f64)>,
    /// Edge-weight bounds; generator defaults apply when absent.
    #[serde(default)]
    pub weights: Option<(f64, f64)>,
    /// Samples per instance.
    pub m: usize,
    /// Number of graphs.
    pub n: usize,
    /// Skip mean-centering in the empirical covariance.
    #[serde(default)]
    pub assume_zero_mean: bool,
}

impl GraphFamilyConfig {
    pub fn erdos(d: usize, p: f64, m: usize, n: usize) -> Self {
        Self {
            generator: GeneratorTag::ErdosFixed,
            d,
            p: Some(p),
            p_range: None,
            weights: None,
            m,
            n,
            assume_zero_mean: false,
        }
    }

    pub fn grid(d: usize, weights: (f64, f64), m: usize, n: usize) -> Self {
        Self {
            generator: GeneratorTag::Grid,
            d,
            p: None,
            p_range: None,
            weights: Some(weights),
            m,
            n,
            assume_zero_mean: false,
        }
    }

    pub fn edge_weights(&self) -> (f64, f64) {
        self.weights.unwrap_or_else(|| self.generator.default_weights())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.d < 2 {
            return bad(format!("d must be >= 2, got {}", self.d));
        }
        let (lo, hi) = self.edge_weights();
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return bad(format!("edge weight bounds ({lo}, {hi}) are not ordered"));
        }
        match self.generator {
            GeneratorTag::ErdosFixed | GeneratorTag::RestrictedRandom => match self.p {
                Some(p) if p > 0.0 && p < 1.0 => {}
                other => return bad(format!("{} needs p in (0,1), got {other:?}", self.generator)),
            },
            GeneratorTag::ErdosMixed => {
                let (a, b) = self.p_range.unwrap_or(MIXED_SPARSITY_RANGE);
                if !(0.0 < a && a <= b && b < 1.0) {
                    return bad(format!("p_range ({a}, {b}) must be ordered within (0,1)"));
                }
            }
            GeneratorTag::Grid => check_grid_dim(self.d)?,
        }
        Ok(())
    }
}

/// One ground-truth precision matrix with its sample covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub theta_star: SymmetricMatrix,
    pub sigma_hat: SymmetricMatrix,
    pub samples: Samples,
    pub generator_tag: GeneratorTag,
    /// Dataset seed; together with `index` it pins every random draw.
    pub seed: u64,
    pub index: usize,
    /// Edge probability actually used (absent for grids).
    pub p: Option<f64>,
}

impl ProblemInstance {
    pub fn dim(&self) -> usize {
        self.theta_star.dim()
    }

    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }
}

/// `m × d` sample matrix, row-major (one row per sample).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Samples {
    dim: usize,
    data: Vec<f64>,
}

impl Samples {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::ShapeError(format!(
                "{} values do not form rows of length {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

fn instance_rng(seed: u64, index: usize, purpose: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((index as u64) << 8) | purpose);
    rng
}

/// Adds `(1 − λ_min)·I` so the smallest eigenvalue becomes exactly 1.
fn shift_to_unit_min_eigenvalue(m: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let lambda_min = sym_eig(m)?.min_eigenvalue();
    Ok(m.add_scaled_identity(1.0 - lambda_min))
}

fn random_support(d: usize, p: f64, lo: f64, hi: f64, rng: &mut ChaCha20Rng) -> Result<SymmetricMatrix> {
    let mut m = SymmetricMatrix::zeros(d);
    for i in 0..d {
        for j in (i + 1)..d {
            // Draw the weight unconditionally so the stream layout does not
            // depend on which edges survive.
            let w = if lo == hi { lo } else { rng.gen_range(lo..hi) };
            if rng.gen::<f64>() < p {
                m.set_sym(i, j, w);
            }
        }
    }
    shift_to_unit_min_eigenvalue(&m)
}

fn erdos_with_rng(d: usize, p: f64, rng: &mut ChaCha20Rng) -> Result<SymmetricMatrix> {
    random_support(d, p, -1.0, 1.0, rng)
}

/// Erdős–Rényi precision matrix: each upper-triangle edge kept with
/// probability `p` with weight `U(−1, 1)`, mirrored, then shifted so
/// `λ_min = 1`.
pub fn gen_erdos_precision(d: usize, p: f64, seed: u64) -> Result<SymmetricMatrix> {
    check_probability(p)?;
    check_min_dim(d)?;
    erdos_with_rng(d, p, &mut instance_rng(seed, 0, STREAM_GRAPH))
}

/// Erdős–Rényi support with positive weights `U(w_lo, w_hi)`, shifted so
/// `λ_min = 1`.
pub fn gen_restricted_random_precision(d: usize, p: f64, w_lo: f64, w_hi: f64, seed: u64) -> Result<SymmetricMatrix> {
    check_probability(p)?;
    check_min_dim(d)?;
    check_bounds(w_lo, w_hi)?;
    random_support(d, p, w_lo, w_hi, &mut instance_rng(seed, 0, STREAM_GRAPH))
}

fn grid_with_rng(d: usize, lo: f64, hi: f64, rng: &mut ChaCha20Rng) -> Result<SymmetricMatrix> {
    check_grid_dim(d)?;
    check_bounds(lo, hi)?;
    let side = (d as f64).sqrt().round() as usize;
    let w = if lo == hi { lo } else { rng.gen_range(lo..hi) };
    let mut m = SymmetricMatrix::zeros(d);
    for r in 0..side {
        for c in 0..side {
            let node = r * side + c;
            if c + 1 < side {
                m.set_sym(node, node + 1, w);
            }
            if r + 1 < side {
                m.set_sym(node, node + side, w);
            }
        }
    }
    shift_to_unit_min_eigenvalue(&m)
}

/// 4-neighbour lattice on a `√d × √d` grid. One weight `U(w_lo, w_hi)` is
/// drawn per graph and shared by every edge; the diagonal is shifted so
/// `λ_min = 1`.
pub fn gen_grid_precision(d: usize, w_lo: f64, w_hi: f64, seed: u64) -> Result<SymmetricMatrix> {
    grid_with_rng(d, w_lo, w_hi, &mut instance_rng(seed, 0, STREAM_GRAPH))
}

fn check_grid_dim(d: usize) -> Result<()> {
    let side = (d as f64).sqrt().round() as usize;
    if d < 4 || side * side != d {
        return Err(Error::InvalidGridSize(d));
    }
    Ok(())
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("edge probability must lie in (0,1), got {p}")))
    }
}

fn check_min_dim(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidConfig(format!("d must be >= 2, got {d}")));
    }
    Ok(())
}

fn check_bounds(lo: f64, hi: f64) -> Result<()> {
    if lo <= hi && lo.is_finite() && hi.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("weight bounds ({lo}, {hi}) are not ordered")))
    }
}

fn sample_with_rng(theta_star: &SymmetricMatrix, m: usize, rng: &mut ChaCha20Rng) -> Result<Samples> {
    let chol = CholeskyFactor::new(theta_star)?;
    let d = theta_star.dim();
    let mut data = Vec::with_capacity(m * d);
    let mut z = vec![0.0; d];
    for _ in 0..m {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        chol.solve_lower_transposed(&mut z);
        data.extend_from_slice(&z);
    }
    Samples::new(d, data)
}

/// `m` draws from `N(0, Θ*⁻¹)` via `x = L⁻ᵀ z`, `Θ* = L Lᵀ`.
pub fn sample_gaussian(theta_star: &SymmetricMatrix, m: usize, seed: u64) -> Result<Samples> {
    sample_with_rng(theta_star, m, &mut instance_rng(seed, 0, STREAM_SAMPLES))
}

/// `(1/m) Σ (x − x̄)(x − x̄)ᵀ`, or without centering when `assume_zero_mean`.
pub fn empirical_cov(samples: &Samples, assume_zero_mean: bool) -> Result<SymmetricMatrix> {
    let m = samples.len();
    if m == 0 {
        return Err(Error::EmptySample);
    }
    let d = samples.dim();
    let mut mean = vec![0.0; d];
    if !assume_zero_mean {
        for k in 0..m {
            for (mu, x) in mean.iter_mut().zip(samples.row(k)) {
                *mu += x;
            }
        }
        mean.iter_mut().for_each(|mu| *mu /= m as f64);
    }
    let mut cov = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for k in 0..m {
        for ((c, x), mu) in centered.iter_mut().zip(samples.row(k)).zip(&mean) {
            *c = x - mu;
        }
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / m as f64;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    SymmetricMatrix::new(d, cov)
}

/// Generates instance `index` of a family. Depends only on
/// `(config, seed, index)`.
pub fn gen_instance(config: &GraphFamilyConfig, seed: u64, index: usize) -> Result<ProblemInstance> {
    let mut graph_rng = instance_rng(seed, index, STREAM_GRAPH);
    let d = config.d;
    let (lo, hi) = config.edge_weights();
    let (theta_star, p) = match config.generator {
        GeneratorTag::ErdosFixed => {
            let p = config.p.unwrap_or_default();
            (random_support(d, p, lo, hi, &mut graph_rng)?, Some(p))
        }
        GeneratorTag::ErdosMixed => {
            let (a, b) = config.p_range.unwrap_or(MIXED_SPARSITY_RANGE);
            let p = if a == b { a } else { instance_rng(seed, index, STREAM_SPARSITY).gen_range(a..b) };
            (random_support(d, p, lo, hi, &mut graph_rng)?, Some(p))
        }
        GeneratorTag::RestrictedRandom => {
            let p = config.p.unwrap_or_default();
            (random_support(d, p, lo, hi, &mut graph_rng)?, Some(p))
        }
        GeneratorTag::Grid => (grid_with_rng(d, lo, hi, &mut graph_rng)?, None),
    };
    let samples = sample_with_rng(&theta_star, config.m, &mut instance_rng(seed, index, STREAM_SAMPLES))?;
    let sigma_hat = empirical_cov(&samples, config.assume_zero_mean)?;
    Ok(ProblemInstance {
        theta_star,
        sigma_hat,
        samples,
        generator_tag: config.generator,
        seed,
        index,
        p,
    })
}

/// `n` independent instances, generated in parallel.
pub fn gen_dataset(config: &GraphFamilyConfig, seed: u64) -> Result<Vec<ProblemInstance>> {
    config.validate()?;
    (0..config.n)
        .into_par_iter()
        .map(|index| gen_instance(config, seed, index))
        .collect()
}
