//! Supervised training of [`GladParams`] on `(Σ̂, Θ*)` pairs.
//!
//! The loss for one instance is `Σ_k γ^{K−k} ‖Θ_k − Θ*‖²_F`. Gradients are
//! computed by a hand-written reverse sweep through the unrolled cells; the
//! matrix square root is differentiated through its Sylvester equation and
//! the soft-threshold through its almost-everywhere derivative.

mod adam;
mod backward;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::ProblemInstance;
use crate::error::{Error, Result};
use crate::glad_model::{glad_predict, GladParams, GladState};
use crate::matcore::SymmetricMatrix;
use crate::metrics::nmse_db;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use backward::{sylvester_adjoint, GradientBundle, SqrtGradFn};
use backward::{backward_tape, Tape};

/// Consecutive learning-rate halvings tolerated before giving up.
pub const MAX_CONSECUTIVE_HALVINGS: usize = 3;
/// Absolute floor on the denominator of the finite-difference relative error.
pub const FD_ABS_FLOOR: f64 = 1e-8;
/// Analytic and numeric derivatives closer than this count as identical;
/// central differences at an exact minimum leave rounding residue of this
/// order.
pub const FD_ABS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub num_unrolls: usize,
    /// Discount γ of earlier iterates.
    pub gamma: f64,
    pub learning_rate: f64,
    /// Optimizer steps at which the learning rate is halved.
    pub lr_milestones: Vec<usize>,
    pub epochs: usize,
    /// Instances per gradient step; `None` uses the whole training set.
    pub batch_size: Option<usize>,
    /// Global gradient-norm clip applied before each update.
    pub grad_clip: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_unrolls: 30,
            gamma: 0.9,
            learning_rate: 0.03,
            lr_milestones: Vec::new(),
            epochs: 100,
            batch_size: None,
            grad_clip: 10.0,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_unrolls == 0 {
            return bad("num_unrolls must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0,1], got {}", self.gamma));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == Some(0) {
            return bad("batch_size must be positive".into());
        }
        if !(self.grad_clip > 0.0) {
            return bad(format!("grad_clip must be positive, got {}", self.grad_clip));
        }
        Ok(())
    }

    /// Scheduled learning rate for the update that follows `step` updates.
    pub fn lr_at(&self, step: usize) -> f64 {
        let passed = self.lr_milestones.iter().filter(|&&m| step >= m).count();
        self.learning_rate * 0.5f64.powi(passed as i32)
    }
}

/// `Σ_{k=1..K} γ^{K−k} ‖Θ_k − Θ*‖²_F` over the states returned by
/// [`glad_forward`](crate::glad_model::glad_forward).
pub fn glad_loss(states: &[GladState], theta_star: &SymmetricMatrix, gamma: f64) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::ShapeError("loss needs at least one state".into()));
    }
    let big_k = states.len();
    let mut total = 0.0;
    for (k, s) in states.iter().enumerate() {
        if s.theta.dim() != theta_star.dim() {
            return Err(Error::ShapeError(format!(
                "state is {0}x{0}, Θ* is {1}x{1}",
                s.theta.dim(),
                theta_star.dim()
            )));
        }
        total += gamma.powi((big_k - k - 1) as i32) * s.theta.distance(theta_star).powi(2);
    }
    Ok(total)
}

/// Loss and gradient for one instance.
pub fn glad_backward(
    sigma_hat: &SymmetricMatrix,
    theta_star: &SymmetricMatrix,
    params: &GladParams,
    config: &TrainConfig,
) -> Result<(f64, GradientBundle)> {
    glad_backward_with(sigma_hat, theta_star, params, config, sylvester_adjoint)
}

/// As [`glad_backward`] with a replaceable square-root adjoint, so that a
/// deliberately broken one can be shown to fail the gradient check.
pub fn glad_backward_with(
    sigma_hat: &SymmetricMatrix,
    theta_star: &SymmetricMatrix,
    params: &GladParams,
    config: &TrainConfig,
    sqrt_grad: SqrtGradFn,
) -> Result<(f64, GradientBundle)> {
    if sigma_hat.dim() != theta_star.dim() {
        return Err(Error::ShapeError(format!(
            "Σ̂ is {0}x{0}, Θ* is {1}x{1}",
            sigma_hat.dim(),
            theta_star.dim()
        )));
    }
    let tape = Tape::record(sigma_hat, params, config.num_unrolls)?;
    let loss = tape.loss(theta_star, config.gamma);
    let grad = backward_tape(&tape, sigma_hat, theta_star, params, config.gamma, sqrt_grad)?;
    Ok((loss, grad))
}

/// Loss without gradients.
pub fn instance_loss(
    sigma_hat: &SymmetricMatrix,
    theta_star: &SymmetricMatrix,
    params: &GladParams,
    num_unrolls: usize,
    gamma: f64,
) -> Result<f64> {
    Ok(Tape::record(sigma_hat, params, num_unrolls)?.loss(theta_star, gamma))
}

/// Summed loss and gradient over `instances`. Per-instance passes run in
/// parallel; the reduction is sequential in instance order.
pub fn batch_gradient(
    instances: &[&ProblemInstance],
    params: &GladParams,
    config: &TrainConfig,
) -> Result<(f64, GradientBundle)> {
    let parts: Vec<Result<(f64, GradientBundle)>> = instances
        .par_iter()
        .map(|inst| glad_backward(&inst.sigma_hat, &inst.theta_star, params, config))
        .collect();
    let mut loss = 0.0;
    let mut grad = GradientBundle::zeros(params.num_params());
    for part in parts {
        let (l, g) = part?;
        loss += l;
        grad.add_assign(&g);
    }
    Ok((loss, grad))
}

/// NMSE (dB) of `Θ_K` over a set of instances.
pub fn evaluate_nmse(instances: &[ProblemInstance], params: &GladParams, num_unrolls: usize) -> Result<f64> {
    let preds: Vec<SymmetricMatrix> = instances
        .par_iter()
        .map(|inst| glad_predict(&inst.sigma_hat, params, num_unrolls).map(|s| s.theta))
        .collect::<Result<_>>()?;
    let truths: Vec<SymmetricMatrix> = instances.iter().map(|i| i.theta_star.clone()).collect();
    Ok(nmse_db(&preds, &truths)?.db)
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub val_nmse_db: Option<f64>,
    pub lr: f64,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best validation NMSE (training loss when there
    /// is no validation set).
    pub best_params: GladParams,
    pub best_epoch: usize,
    pub final_params: GladParams,
    pub log: Vec<EpochLog>,
}

pub fn train(
    train_set: &[ProblemInstance],
    val_set: &[ProblemInstance],
    config: &TrainConfig,
    init: Option<GladParams>,
) -> Result<TrainOutcome> {
    train_with_observer(train_set, val_set, config, init, |_| {})
}

/// Training loop. `observer` sees each log row as soon as it is produced,
/// so callers can persist progress even if training later diverges.
///
/// A batch whose forward or backward pass fails (non-finite gradient,
/// collapsed penalty, lost definiteness) is not applied: the previous update
/// is rolled back, the learning rate is halved and training continues.
/// [`MAX_CONSECUTIVE_HALVINGS`] such failures in a row abort with
/// `TrainingDiverged`.
pub fn train_with_observer(
    train_set: &[ProblemInstance],
    val_set: &[ProblemInstance],
    config: &TrainConfig,
    init: Option<GladParams>,
    mut observer: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let d = train_set[0].dim();
    if let Some(bad) = train_set.iter().chain(val_set).find(|i| i.dim() != d) {
        return Err(Error::ShapeError(format!(
            "instances must share one dimension: {d} vs {}",
            bad.dim()
        )));
    }
    let started = Instant::now();
    let elapsed = || started.elapsed().as_secs_f64() * 1e3;
    let k = config.num_unrolls;
    let n = train_set.len();
    let batch = config.batch_size.unwrap_or(n).min(n);

    let mut params = init.unwrap_or_else(|| GladParams::init(config.seed));
    let mut adam = AdamState::new(params.num_params());
    let mut shuffle_rng = ChaCha20Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);

    let score = |params: &GladParams, train_loss: f64| -> Option<f64> {
        if val_set.is_empty() {
            Some(train_loss)
        } else {
            evaluate_nmse(val_set, params, k).ok()
        }
    };
    let initial_loss = train_set
        .par_iter()
        .map(|i| instance_loss(&i.sigma_hat, &i.theta_star, &params, k, config.gamma))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum::<f64>()
        / n as f64;
    let initial_score = score(&params, initial_loss);
    let first = EpochLog {
        epoch: 0,
        mean_train_loss: initial_loss,
        val_nmse_db: if val_set.is_empty() { None } else { initial_score },
        lr: config.lr_at(0),
        wall_time_ms: elapsed(),
    };
    observer(&first);
    let mut log = vec![first];
    let mut best = (initial_score.unwrap_or(f64::INFINITY), 0, params.clone());

    let mut lr_scale = 1.0;
    let mut halvings = 0;
    // State before the most recent update, restored when the next pass fails.
    let mut checkpoint = (params.clone(), adam.clone());
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=config.epochs {
        if batch < n {
            order.shuffle(&mut shuffle_rng);
        }
        let mut loss_sum = 0.0;
        let mut counted = 0;
        for chunk in order.chunks(batch) {
            let members: Vec<&ProblemInstance> = chunk.iter().map(|&i| &train_set[i]).collect();
            match batch_gradient(&members, &params, config) {
                Ok((loss, mut grad)) if loss.is_finite() => {
                    halvings = 0;
                    loss_sum += loss;
                    counted += members.len();
                    grad.scale(1.0 / members.len() as f64);
                    grad.clip(config.grad_clip);
                    checkpoint = (params.clone(), adam.clone());
                    let lr = config.lr_at(adam.step) * lr_scale;
                    let mut flat = params.to_flat();
                    adam_step(&mut flat, grad.as_slice(), &mut adam, lr, &config.adam);
                    params = params.with_flat(&flat)?;
                }
                Ok(_) | Err(Error::GradientOverflow) | Err(Error::DegeneratePenalty(_))
                | Err(Error::NotPositiveDefinite) | Err(Error::InitFailure(_))
                | Err(Error::NumericalFailure(_)) | Err(Error::SingularSylvester(_)) => {
                    halvings += 1;
                    if halvings >= MAX_CONSECUTIVE_HALVINGS {
                        return Err(Error::TrainingDiverged(halvings));
                    }
                    lr_scale *= 0.5;
                    (params, adam) = checkpoint.clone();
                }
                Err(e) => return Err(e),
            }
        }
        let mean_train_loss = if counted > 0 { loss_sum / counted as f64 } else { f64::NAN };
        let s = score(&params, mean_train_loss);
        let row = EpochLog {
            epoch,
            mean_train_loss,
            val_nmse_db: if val_set.is_empty() { None } else { s },
            lr: config.lr_at(adam.step) * lr_scale,
            wall_time_ms: elapsed(),
        };
        observer(&row);
        log.push(row);
        if let Some(s) = s {
            if s < best.0 {
                best = (s, epoch, params.clone());
            }
        }
    }
    Ok(TrainOutcome { best_params: best.2, best_epoch: best.1, final_params: params, log })
}

/// Result of a finite-difference audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub max_rel_error: f64,
    /// Flat indices actually compared.
    pub probes: Vec<usize>,
    /// Candidates rejected because a perturbation crossed a threshold kink.
    pub skipped: usize,
    /// Smallest `| |Θ'_ij| − ρ_ij |` in the unperturbed pass.
    pub kink_margin: f64,
}

/// Compares the analytic gradient with central differences (`h = 1e-5`) on
/// `probe_count` random coordinates. Coordinates whose ±h perturbation
/// flips any entry across its soft-threshold are skipped and redrawn.
///
/// Relative error is `|a − n| / max(|a|, |n|, FD_ABS_FLOOR)`, and zero when
/// `|a − n| <= FD_ABS_TOL`.
pub fn finite_diff_check(
    sigma_hat: &SymmetricMatrix,
    theta_star: &SymmetricMatrix,
    params: &GladParams,
    config: &TrainConfig,
    probe_count: usize,
    seed: u64,
) -> Result<FdReport> {
    finite_diff_check_with(sigma_hat, theta_star, params, config, probe_count, seed, sylvester_adjoint)
}

pub fn finite_diff_check_with(
    sigma_hat: &SymmetricMatrix,
    theta_star: &SymmetricMatrix,
    params: &GladParams,
    config: &TrainConfig,
    probe_count: usize,
    seed: u64,
    sqrt_grad: SqrtGradFn,
) -> Result<FdReport> {
    if probe_count == 0 {
        return Err(Error::InvalidConfig("probe_count must be at least 1".into()));
    }
    const H: f64 = 1e-5;
    let k = config.num_unrolls;
    let base = Tape::record(sigma_hat, params, k)?;
    let pattern = base.active_pattern();
    let (_, grad) = glad_backward_with(sigma_hat, theta_star, params, config, sqrt_grad)?;
    let flat = params.to_flat();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut report = FdReport { max_rel_error: 0.0, probes: Vec::new(), skipped: 0, kink_margin: base.kink_margin() };
    let budget = 20 * probe_count + flat.len();
    let mut tried = 0;
    while report.probes.len() < probe_count && tried < budget {
        tried += 1;
        let idx = if probe_count >= flat.len() && report.probes.len() + report.skipped < flat.len() {
            report.probes.len() + report.skipped
        } else {
            rng.gen_range(0..flat.len())
        };
        let mut perturbed = flat.clone();
        perturbed[idx] = flat[idx] + H;
        let plus = Tape::record(sigma_hat, &params.with_flat(&perturbed)?, k)?;
        perturbed[idx] = flat[idx] - H;
        let minus = Tape::record(sigma_hat, &params.with_flat(&perturbed)?, k)?;
        if plus.active_pattern() != pattern || minus.active_pattern() != pattern {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus.loss(theta_star, config.gamma) - minus.loss(theta_star, config.gamma)) / (2.0 * H);
        let analytic = grad.0[idx];
        let denom = analytic.abs().max(numeric.abs()).max(FD_ABS_FLOOR);
        let gap = (analytic - numeric).abs();
        if gap > FD_ABS_TOL {
            report.max_rel_error = report.max_rel_error.max(gap / denom);
        }
        report.probes.push(idx);
    }
    Ok(report)
}

#[cfg(test)]
mod tests;
