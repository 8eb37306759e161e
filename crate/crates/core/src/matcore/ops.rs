use crate::error::{Error, Result};

use super::eigen::{sym_eig, SpectralDecomposition};
use super::matrix::SymmetricMatrix;

/// Eigenvalues in `[-PSD_CLAMP, 0)` are treated as rounding noise and clamped.
pub const PSD_CLAMP: f64 = 1e-10;
/// Smallest Cholesky pivot accepted as positive definite.
pub const CHOLESKY_MIN_PIVOT: f64 = 1e-12;
/// Smallest admissible eigenvalue-pair sum in the Sylvester solve.
pub const SYLVESTER_MIN_DENOM: f64 = 1e-12;

/// `sign(x) * max(|x| - tau, 0)`.
pub fn soft_threshold(x: f64, tau: f64) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidThreshold(tau));
    }
    Ok(shrink(x, tau))
}

/// Unchecked soft-threshold; `tau` must be non-negative.
#[inline]
pub(crate) fn shrink(x: f64, tau: f64) -> f64 {
    let mag = x.abs() - tau;
    if mag > 0.0 {
        mag.copysign(x)
    } else {
        0.0
    }
}

/// Element-wise soft-threshold. With `include_diagonal == false` the
/// diagonal is copied through unchanged.
pub fn soft_threshold_matrix(
    a: &SymmetricMatrix,
    tau: f64,
    include_diagonal: bool,
) -> Result<SymmetricMatrix> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidThreshold(tau));
    }
    Ok(a.map_indexed(|i, j, v| {
        if i == j && !include_diagonal {
            v
        } else {
            shrink(v, tau)
        }
    }))
}

/// Lower-triangular Cholesky factor `A = L Lᵀ`, row-major.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    dim: usize,
    lower: Vec<f64>,
}

impl CholeskyFactor {
    /// Fails with `NotPositiveDefinite` if any pivot is `<= 1e-12`.
    pub fn new(a: &SymmetricMatrix) -> Result<Self> {
        let d = a.dim();
        let mut l = vec![0.0; d * d];
        for j in 0..d {
            let mut diag = a.get(j, j);
            for k in 0..j {
                diag -= l[j * d + k] * l[j * d + k];
            }
            if !(diag > CHOLESKY_MIN_PIVOT) {
                return Err(Error::NotPositiveDefinite);
            }
            let ljj = diag.sqrt();
            l[j * d + j] = ljj;
            for i in (j + 1)..d {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                l[i * d + j] = s / ljj;
            }
        }
        Ok(Self { dim: d, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.lower[i * self.dim + i].ln())
            .sum::<f64>()
            * 2.0
    }

    /// Solves `L y = b` in place.
    pub fn solve_lower(&self, b: &mut [f64]) {
        let d = self.dim;
        for i in 0..d {
            let mut s = b[i];
            for k in 0..i {
                s -= self.lower[i * d + k] * b[k];
            }
            b[i] = s / self.lower[i * d + i];
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn solve_lower_transposed(&self, b: &mut [f64]) {
        let d = self.dim;
        for i in (0..d).rev() {
            let mut s = b[i];
            for k in (i + 1)..d {
                s -= self.lower[k * d + i] * b[k];
            }
            b[i] = s / self.lower[i * d + i];
        }
    }

    /// `L⁻¹ M L⁻ᵀ`.
    pub fn whiten(&self, m: &SymmetricMatrix) -> SymmetricMatrix {
        let d = self.dim;
        assert_eq!(m.dim(), d);
        // X = L⁻¹ M, column by column; then L⁻¹ Xᵀ.
        let mut x = vec![0.0; d * d];
        let mut col = vec![0.0; d];
        for j in 0..d {
            for i in 0..d {
                col[i] = m.get(i, j);
            }
            self.solve_lower(&mut col);
            for i in 0..d {
                x[i * d + j] = col[i];
            }
        }
        let mut out = vec![0.0; d * d];
        for j in 0..d {
            col.copy_from_slice(&x[j * d..(j + 1) * d]);
            self.solve_lower(&mut col);
            for i in 0..d {
                out[i * d + j] = col[i];
            }
        }
        SymmetricMatrix::symmetrized(d, out)
    }

    pub fn inverse(&self) -> SymmetricMatrix {
        let d = self.dim;
        let mut data = vec![0.0; d * d];
        let mut col = vec![0.0; d];
        for j in 0..d {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[j] = 1.0;
            self.solve_lower(&mut col);
            self.solve_lower_transposed(&mut col);
            for i in 0..d {
                data[i * d + j] = col[i];
            }
        }
        SymmetricMatrix::symmetrized(d, data)
    }
}

/// True iff a Cholesky factorisation succeeds with every pivot above 1e-12.
pub fn is_spd(a: &SymmetricMatrix) -> bool {
    CholeskyFactor::new(a).is_ok()
}

pub fn spd_inverse(a: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    Ok(CholeskyFactor::new(a)?.inverse())
}

pub fn log_det_spd(a: &SymmetricMatrix) -> Result<f64> {
    Ok(CholeskyFactor::new(a)?.log_det())
}

/// Principal square root of a symmetric PSD matrix.
pub fn spd_sqrt(a: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let eig = sym_eig(a)?;
    let min = eig.min_eigenvalue();
    if min < -PSD_CLAMP {
        return Err(Error::NotPositiveSemiDefinite {
            min_eigenvalue: min,
        });
    }
    Ok(eig.map_eigenvalues(|l| l.max(0.0).sqrt()))
}

/// Sensitivity of a loss with respect to `X` given its sensitivity with
/// respect to `S = X^{1/2}`.
///
/// Differentiating `X = S S` gives the Sylvester equation
/// `dX = dS S + S dS`; in the eigenbasis of `S = Q diag(μ) Qᵀ` it decouples
/// entry-wise and the adjoint is `Q [ (Qᵀ G Q)_ij / (μ_i + μ_j) ] Qᵀ`.
pub fn sylvester_sqrt_grad(s: &SymmetricMatrix, grad_s: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let eig = sym_eig(s)?;
    sylvester_sqrt_grad_with(&eig, grad_s)
}

/// As [`sylvester_sqrt_grad`], reusing an existing decomposition of `S`.
pub fn sylvester_sqrt_grad_with(
    s_eig: &SpectralDecomposition,
    grad_s: &SymmetricMatrix,
) -> Result<SymmetricMatrix> {
    if grad_s.dim() != s_eig.dim() {
        return Err(Error::ShapeError(format!(
            "gradient is {}x{}, square root is {}x{}",
            grad_s.dim(),
            grad_s.dim(),
            s_eig.dim(),
            s_eig.dim()
        )));
    }
    let mu = s_eig.eigenvalues();
    let in_basis = s_eig.to_eigenbasis(grad_s);
    let mut worst = f64::INFINITY;
    let solved = in_basis.map_indexed(|i, j, g| {
        let denom = mu[i] + mu[j];
        worst = worst.min(denom);
        g / denom
    });
    if worst < SYLVESTER_MIN_DENOM {
        return Err(Error::SingularSylvester(worst));
    }
    Ok(s_eig.from_eigenbasis(&solved))
}

/// Minimiser of `-log det Θ + (λ/2)‖Θ + Y‖²_F`, i.e.
/// `Θ = ½(−Y + √(YᵀY + (4/λ)I))`, together with the eigendecomposition of
/// the square-root term.
#[derive(Debug, Clone)]
pub struct LogDetProx {
    pub theta: SymmetricMatrix,
    /// Decomposition of `S = √(Y² + (4/λ)I)`; shares eigenvectors with `Y`.
    pub sqrt_term: SpectralDecomposition,
}

/// Closed-form Θ-update shared by AM, ADMM and the unrolled cell.
///
/// `Y` is diagonalised once; `S` has eigenvalues `√(y_i² + 4/λ)` in the same
/// basis, and `Θ` has eigenvalues `(S_i − y_i)/2`, evaluated in the
/// cancellation-free form `(2/λ)/(y_i + S_i)` when `y_i > 0`. Every eigenvalue
/// of `Θ` is strictly positive for finite `λ`.
pub fn log_det_prox(y: &SymmetricMatrix, lambda: f64) -> Result<LogDetProx> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::DegeneratePenalty(lambda));
    }
    let eig = sym_eig(y)?;
    let c = 4.0 / lambda;
    let ys = eig.eigenvalues();
    let sqrt_vals: Vec<f64> = ys.iter().map(|&v| (v * v + c).sqrt()).collect();
    let theta_vals: Vec<f64> = ys
        .iter()
        .zip(&sqrt_vals)
        .map(|(&v, &s)| {
            if v > 0.0 {
                (2.0 / lambda) / (v + s)
            } else {
                0.5 * (s - v)
            }
        })
        .collect();
    let theta = eig.compose(&theta_vals);
    let sqrt_term = eig.with_eigenvalues(sqrt_vals);
    Ok(LogDetProx { theta, sqrt_term })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::test_support::{random_spd, random_symmetric};

    #[test]
    fn soft_threshold_examples() {
        assert!((soft_threshold(1.2, 0.5).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(soft_threshold(-0.3, 0.5).unwrap(), 0.0);
        assert_eq!(soft_threshold(-2.5, 0.0).unwrap(), -2.5);
        assert_eq!(soft_threshold(0.5, 0.5).unwrap(), 0.0);
        assert!(matches!(
            soft_threshold(1.0, -0.1),
            Err(Error::InvalidThreshold(_))
        ));
        assert!(soft_threshold(1.0, f64::NAN).is_err());
    }

    #[test]
    fn soft_threshold_matrix_keeps_diagonal_when_asked() {
        let a = SymmetricMatrix::new(2, vec![0.3, 0.2, 0.2, -0.9]).unwrap();
        let off = soft_threshold_matrix(&a, 0.5, false).unwrap();
        assert_eq!(off.as_slice(), &[0.3, 0.0, 0.0, -0.9]);
        let full = soft_threshold_matrix(&a, 0.5, true).unwrap();
        assert_eq!(full.as_slice(), &[0.0, 0.0, 0.0, -0.4]);
    }

    #[test]
    fn spd_checks() {
        assert!(is_spd(&SymmetricMatrix::identity(5)));
        assert!(!is_spd(&SymmetricMatrix::from_diagonal(&[1.0, -1.0]).unwrap()));
        assert!(!is_spd(&SymmetricMatrix::zeros(3)));
    }

    #[test]
    fn inverse_examples() {
        let a = SymmetricMatrix::from_diagonal(&[2.0, 4.0]).unwrap();
        let expected = SymmetricMatrix::from_diagonal(&[0.5, 0.25]).unwrap();
        assert!(spd_inverse(&a).unwrap().distance(&expected) < 1e-15);
        let i = SymmetricMatrix::identity(4);
        assert_eq!(spd_inverse(&i).unwrap(), i);
        assert!(matches!(
            spd_inverse(&SymmetricMatrix::from_diagonal(&[1.0, -2.0]).unwrap()),
            Err(Error::NotPositiveDefinite)
        ));
        for seed in 0..10 {
            let d = 8;
            let b = random_spd(d, seed);
            let inv = spd_inverse(&b).unwrap();
            let prod = b.matmul_general(&inv);
            let mut err = 0.0;
            for r in 0..d {
                for c in 0..d {
                    let t = if r == c { 1.0 } else { 0.0 };
                    err += (prod[r * d + c] - t).powi(2);
                }
            }
            assert!(err.sqrt() <= 1e-7 * d as f64);
        }
    }

    #[test]
    fn whiten_matches_explicit_inverse_sandwich() {
        let a = random_spd(5, 8);
        let m = random_symmetric(5, 9);
        let chol = CholeskyFactor::new(&a).unwrap();
        let w = chol.whiten(&m);
        // L W Lᵀ = M
        let d = 5;
        let l = chol.lower();
        let mut lw = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                lw[i * d + j] = (0..d).map(|k| l[i * d + k] * w.get(k, j)).sum();
            }
        }
        for i in 0..d {
            for j in 0..d {
                let v: f64 = (0..d).map(|k| lw[i * d + k] * l[j * d + k]).sum();
                assert!((v - m.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn log_det_matches_eigenvalues() {
        let b = random_spd(6, 11);
        let eig = sym_eig(&b).unwrap();
        let expected: f64 = eig.eigenvalues().iter().map(|l| l.ln()).sum();
        assert!((log_det_spd(&b).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn sqrt_examples() {
        let a = SymmetricMatrix::from_diagonal(&[4.0, 9.0]).unwrap();
        let s = spd_sqrt(&a).unwrap();
        assert!(s.distance(&SymmetricMatrix::from_diagonal(&[2.0, 3.0]).unwrap()) < 1e-15);
        assert_eq!(spd_sqrt(&SymmetricMatrix::identity(4)).unwrap(), SymmetricMatrix::identity(4));
        for seed in 0..10 {
            let b = random_spd(7, seed);
            let s = spd_sqrt(&b).unwrap();
            assert!(s.square().distance(&b) <= 1e-7 * b.frobenius_norm().max(1.0));
        }
    }

    #[test]
    fn sqrt_clamps_rounding_noise_but_rejects_indefinite() {
        let tiny = SymmetricMatrix::from_diagonal(&[1.0, -5e-11]).unwrap();
        let s = spd_sqrt(&tiny).unwrap();
        assert_eq!(s.get(1, 1), 0.0);
        let bad = SymmetricMatrix::from_diagonal(&[1.0, -1e-6]).unwrap();
        assert!(matches!(
            spd_sqrt(&bad),
            Err(Error::NotPositiveSemiDefinite { .. })
        ));
    }

    #[test]
    fn sylvester_examples() {
        let g = random_symmetric(4, 2);
        let half = sylvester_sqrt_grad(&SymmetricMatrix::identity(4), &g).unwrap();
        assert!(half.distance(&g.scale(0.5)) < 1e-14);

        let s = SymmetricMatrix::from_diagonal(&[2.0, 3.0]).unwrap();
        let out = sylvester_sqrt_grad(&s, &SymmetricMatrix::identity(2)).unwrap();
        assert!((out.get(0, 0) - 0.25).abs() < 1e-15);
        assert!((out.get(1, 1) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(out.get(0, 1), 0.0);

        assert!(matches!(
            sylvester_sqrt_grad(&SymmetricMatrix::zeros(2), &SymmetricMatrix::identity(2)),
            Err(Error::SingularSylvester(_))
        ));
    }

    #[test]
    fn log_det_prox_scalar_closed_form() {
        // Y = I, λ = 1: θ = (−1 + √5)/2.
        let p = log_det_prox(&SymmetricMatrix::identity(3), 1.0).unwrap();
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        assert!(p.theta.distance(&SymmetricMatrix::scaled_identity(3, golden)) < 1e-15);
    }

    #[test]
    fn log_det_prox_matches_literal_formula() {
        for seed in 0..5 {
            let y = random_symmetric(6, seed);
            for lambda in [0.1, 1.0, 10.0] {
                let p = log_det_prox(&y, lambda).unwrap();
                let s = spd_sqrt(&y.square().add_scaled_identity(4.0 / lambda)).unwrap();
                let literal = (s - &y).scale(0.5);
                assert!(p.theta.distance(&literal) < 1e-10);
                assert!(is_spd(&p.theta));
            }
        }
    }
}
