//! Numerical property checks for the convergence theory of alternating
//! minimisation: the scalar square-root inequality, the contraction of
//! `X ↦ √(X² + (4/λ)I)`, the per-step AM contraction and its linear rate.
//!
//! Every check returns a [`SuiteReport`] instead of failing, so callers can
//! collect several suites into one machine-readable report.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{am_step, initial_iterate, L1Scope};
use crate::datagen::{gen_instance, GraphFamilyConfig};
use crate::error::Result;
use crate::matcore::{log_det_prox, spd_sqrt, sym_eig, SymmetricMatrix};

/// Tolerance added to every right-hand side before counting a violation.
pub const LEMMA_SLACK: f64 = 1e-10;

/// Matrix square root used by the contraction check; swappable so that a
/// broken implementation can be shown to fail it.
pub type SqrtFn = fn(&SymmetricMatrix) -> Result<SymmetricMatrix>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub cases: usize,
    pub violations: usize,
    /// Largest `lhs − rhs` seen; negative when every case holds strictly.
    pub worst_excess: f64,
    pub passed: bool,
    /// Suite-specific summary numbers.
    pub stats: BTreeMap<String, f64>,
}

impl SuiteReport {
    fn new(suite: &str) -> Self {
        Self {
            suite: suite.to_string(),
            cases: 0,
            violations: 0,
            worst_excess: f64::NEG_INFINITY,
            passed: false,
            stats: BTreeMap::new(),
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64) {
        self.cases += 1;
        let excess = lhs - rhs;
        if !(excess <= LEMMA_SLACK) {
            self.violations += 1;
        }
        if excess > self.worst_excess || excess.is_nan() {
            self.worst_excess = excess;
        }
    }

    fn finish(mut self) -> Self {
        self.passed = self.cases > 0 && self.violations == 0;
        self
    }
}

/// Both sides of `(√(x²+k) − √(y²+k))² / (x−y)² ≤ 1 − 1/√((x²/k+1)(y²/k+1))`.
///
/// The left side is evaluated as `((x+y)/(√(x²+k)+√(y²+k)))²`, the same
/// quantity without the cancellation of the difference quotient.
pub fn scalar_lemma_sides(x: f64, y: f64, k: f64) -> (f64, f64) {
    let sx = (x * x + k).sqrt();
    let sy = (y * y + k).sqrt();
    let lhs = ((x + y) / (sx + sy)).powi(2);
    let rhs = 1.0 - 1.0 / ((x * x / k + 1.0) * (y * y / k + 1.0)).sqrt();
    (lhs, rhs)
}

/// Scalar inequality on `cases` random triples, `k` log-uniform in
/// `[1e-3, 1e3]` and `x, y` spread over several magnitudes.
pub fn check_scalar_lemma(cases: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("scalar_sqrt_inequality");
    while report.cases < cases {
        let scale = 10f64.powf(rng.gen_range(-2.0..2.0));
        let x = rng.gen_range(-1.0..1.0) * scale;
        let y = rng.gen_range(-1.0..1.0) * scale;
        let k = 10f64.powf(rng.gen_range(-3.0..3.0));
        if x == y {
            continue;
        }
        let (lhs, rhs) = scalar_lemma_sides(x, y, k);
        report.record(lhs, rhs);
    }
    report.finish()
}

/// `α_λ = 1 − ½ (λa²/4 + 1)^{−1/2} (λb²/4 + 1)^{−1/2}` for spectral radii `a`, `b`.
pub fn sqrt_contraction_factor(lambda: f64, radius_x: f64, radius_y: f64) -> f64 {
    let fx = (lambda * radius_x * radius_x / 4.0 + 1.0).sqrt();
    let fy = (lambda * radius_y * radius_y / 4.0 + 1.0).sqrt();
    1.0 - 0.5 / (fx * fy)
}

/// `A(X) = √(XᵀX + (4/λ)I)` through the supplied square root.
pub fn sqrt_map(x: &SymmetricMatrix, lambda: f64, sqrt: SqrtFn) -> Result<SymmetricMatrix> {
    sqrt(&x.square().add_scaled_identity(4.0 / lambda))
}

/// `‖A(X) − A(Y)‖_F ≤ α_λ ‖X − Y‖_F` on `pairs` random symmetric pairs per λ.
pub fn check_sqrt_contraction(pairs: usize, lambdas: &[f64], seed: u64, sqrt: SqrtFn) -> Result<SuiteReport> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("sqrt_map_contraction");
    let mut worst_alpha: f64 = 0.0;
    for &lambda in lambdas {
        for _ in 0..pairs {
            let d = rng.gen_range(2..=8);
            let scale = 10f64.powf(rng.gen_range(-1.0..1.0));
            let x = SymmetricMatrix::from_fn(d, |_, _| rng.gen_range(-1.0..1.0) * scale)?;
            let y = SymmetricMatrix::from_fn(d, |_, _| rng.gen_range(-1.0..1.0) * scale)?;
            let alpha =
                sqrt_contraction_factor(lambda, sym_eig(&x)?.max_abs_eigenvalue(), sym_eig(&y)?.max_abs_eigenvalue());
            worst_alpha = worst_alpha.max(alpha);
            let lhs = sqrt_map(&x, lambda, sqrt)?.distance(&sqrt_map(&y, lambda, sqrt)?);
            report.record(lhs, alpha * x.distance(&y));
        }
    }
    report.stats.insert("max_alpha".into(), worst_alpha);
    Ok(report.finish())
}

/// Healthy default for [`check_sqrt_contraction`].
pub fn default_sqrt(a: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    spd_sqrt(a)
}

/// `C_λ = 1 − (λa² + 4)^{−1/2} (λb² + 4)^{−1/2}` for the spectral radii of two
/// AM arguments `Y = Σ̂/λ − Z`.
pub fn am_contraction_factor(lambda: f64, radius_y: f64, radius_ref: f64) -> f64 {
    1.0 - 1.0 / ((lambda * radius_y * radius_y + 4.0).sqrt() * (lambda * radius_ref * radius_ref + 4.0).sqrt())
}

/// Problem family and solver settings for the AM checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmCheckConfig {
    pub family: GraphFamilyConfig,
    pub rho: f64,
    pub lambda: f64,
    /// Iterations used to approximate the fixed point.
    pub reference_iters: usize,
    /// Iterations compared against the fixed point.
    pub steps: usize,
}

impl Default for AmCheckConfig {
    fn default() -> Self {
        Self {
            family: GraphFamilyConfig::erdos(10, 0.2, 100, 1),
            rho: 0.1,
            lambda: 1.0,
            reference_iters: 2000,
            steps: 50,
        }
    }
}

/// One AM trajectory together with its (approximate) fixed point.
#[derive(Debug, Clone)]
pub struct AmRun {
    pub sigma_hat: SymmetricMatrix,
    /// `Θ_k`, `Z_k` for `k = 0..=steps`.
    pub thetas: Vec<SymmetricMatrix>,
    pub zs: Vec<SymmetricMatrix>,
    pub theta_ref: SymmetricMatrix,
    pub z_ref: SymmetricMatrix,
}

/// Runs AM on instance `index` of the configured family.
pub fn am_run(cfg: &AmCheckConfig, seed: u64, index: usize) -> Result<AmRun> {
    let sigma_hat = gen_instance(&cfg.family, seed, index)?.sigma_hat;
    let (rho, lambda) = (cfg.rho, cfg.lambda);
    let theta0 = initial_iterate(&sigma_hat, 1.0)?;
    let mut thetas = vec![theta0.clone()];
    let mut zs = vec![theta0];
    let mut z_ref = zs[0].clone();
    for k in 0..cfg.reference_iters.max(cfg.steps) {
        let (theta, z) = am_step(&z_ref, &sigma_hat, rho, lambda, L1Scope::Full)?;
        if k < cfg.steps {
            thetas.push(theta);
            zs.push(z.clone());
        }
        z_ref = z;
    }
    // Θ̂ paired with Ẑ through one exact prox, so both sides use the same map.
    let theta_ref = log_det_prox(&(sigma_hat.scale(1.0 / lambda) - &z_ref), lambda)?.theta;
    Ok(AmRun { sigma_hat, thetas, zs, theta_ref, z_ref })
}

/// `‖Θ_{k+1} − Θ̂‖_F ≤ C_λ ‖Z_k − Ẑ‖_F` at every step of `runs` AM runs.
pub fn check_am_contraction(runs: usize, cfg: &AmCheckConfig, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("am_step_contraction");
    let mut max_c: f64 = 0.0;
    let mut max_ratio: f64 = 0.0;
    let lambda = cfg.lambda;
    for r in 0..runs {
        let run = am_run(cfg, seed, r)?;
        let base = run.sigma_hat.scale(1.0 / lambda);
        let radius_ref = sym_eig(&(&base - &run.z_ref))?.max_abs_eigenvalue();
        for k in 0..cfg.steps {
            let y = &base - &run.zs[k];
            let c = am_contraction_factor(lambda, sym_eig(&y)?.max_abs_eigenvalue(), radius_ref);
            max_c = max_c.max(c);
            let lhs = run.thetas[k + 1].distance(&run.theta_ref);
            let gap = run.zs[k].distance(&run.z_ref);
            if gap > 0.0 {
                max_ratio = max_ratio.max(lhs / gap);
            }
            report.record(lhs, c * gap);
            if !(c < 1.0) {
                report.violations += 1;
            }
        }
    }
    report.stats.insert("max_c_lambda".into(), max_c);
    report.stats.insert("max_observed_ratio".into(), max_ratio);
    Ok(report.finish())
}

/// Least-squares line through `(x, y)` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    LinearFit { slope, intercept, r_squared }
}

/// Fit of `ln ‖Z_k − Ẑ‖_F` against `k` over `k_range` (inclusive).
pub fn am_log_error_fit(run: &AmRun, k_range: (usize, usize)) -> LinearFit {
    let (ks, logs): (Vec<f64>, Vec<f64>) = (k_range.0..=k_range.1)
        .map(|k| (k as f64, run.zs[k].distance(&run.z_ref).ln()))
        .unzip();
    linear_fit(&ks, &logs)
}

/// Minimum R² accepted for the log-linear fit.
pub const LINEAR_RATE_MIN_R2: f64 = 0.99;

/// Log-linear decay of the AM error on `runs` instances over `k_range`.
pub fn check_linear_convergence(
    runs: usize,
    cfg: &AmCheckConfig,
    k_range: (usize, usize),
    seed: u64,
) -> Result<SuiteReport> {
    let cfg = AmCheckConfig { steps: cfg.steps.max(k_range.1), ..cfg.clone() };
    let mut report = SuiteReport::new("am_linear_rate");
    let mut min_r2 = f64::INFINITY;
    let mut max_slope = f64::NEG_INFINITY;
    for r in 0..runs {
        let run = am_run(&cfg, seed, r)?;
        let fit = am_log_error_fit(&run, k_range);
        min_r2 = min_r2.min(fit.r_squared);
        max_slope = max_slope.max(fit.slope);
        report.cases += 1;
        if !(fit.r_squared >= LINEAR_RATE_MIN_R2 && fit.slope < 0.0) {
            report.violations += 1;
        }
        report.worst_excess = report.worst_excess.max(LINEAR_RATE_MIN_R2 - fit.r_squared);
    }
    report.stats.insert("min_r_squared".into(), min_r2);
    report.stats.insert("max_slope".into(), max_slope);
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_spot_value() {
        let (lhs, rhs) = scalar_lemma_sides(1.0, 2.0, 1.0);
        assert!((lhs - 0.67545).abs() < 1e-5, "{lhs}");
        assert!((rhs - 0.68377).abs() < 1e-5, "{rhs}");
        let direct = ((2f64).sqrt() - 5f64.sqrt()).powi(2);
        assert!((lhs - direct).abs() < 1e-14);
    }

    #[test]
    fn scalar_suite_passes() {
        let r = check_scalar_lemma(10_000, 1);
        assert_eq!(r.cases, 10_000);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn sqrt_contraction_passes() {
        let r = check_sqrt_contraction(200, &[0.1, 1.0, 10.0], 2, default_sqrt).unwrap();
        assert_eq!(r.cases, 600);
        assert!(r.passed, "{r:?}");
        assert!(r.stats["max_alpha"] < 1.0);
    }

    fn skipped_root(a: &SymmetricMatrix) -> Result<SymmetricMatrix> {
        Ok(a.clone())
    }

    fn inflated_root(a: &SymmetricMatrix) -> Result<SymmetricMatrix> {
        Ok(spd_sqrt(a)?.scale(2.0))
    }

    #[test]
    fn broken_sqrt_fails_contraction() {
        for bad in [skipped_root as SqrtFn, inflated_root] {
            let r = check_sqrt_contraction(200, &[0.1, 1.0, 10.0], 2, bad).unwrap();
            assert!(!r.passed && r.violations > 0, "{r:?}");
        }
    }

    #[test]
    fn contraction_factors_below_one() {
        for &(l, a, b) in &[(0.1, 0.0, 0.0), (1.0, 5.0, 1e3), (10.0, 1e6, 1e6)] {
            assert!(sqrt_contraction_factor(l, a, b) < 1.0);
            assert!(am_contraction_factor(l, a, b) < 1.0);
        }
        assert_eq!(sqrt_contraction_factor(1.0, 0.0, 0.0), 0.5);
        assert_eq!(am_contraction_factor(1.0, 0.0, 0.0), 0.75);
    }

    #[test]
    fn am_contraction_holds() {
        let cfg = AmCheckConfig { steps: 30, reference_iters: 1500, ..Default::default() };
        let r = check_am_contraction(4, &cfg, 3).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn linear_fit_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, -1.0, -3.0, -5.0];
        let f = linear_fit(&xs, &ys);
        assert!((f.slope + 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
    }

    #[test]
    fn am_error_decays_log_linearly() {
        let r = check_linear_convergence(3, &AmCheckConfig::default(), (5, 50), 4).unwrap();
        assert!(r.passed, "{r:?}");
    }
}
