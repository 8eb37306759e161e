//! Cyclic Jacobi eigensolver for dense symmetric matrices.

use crate::error::{Error, Result};

use super::matrix::{matmul, SymmetricMatrix};

/// Sweep cap for the cyclic Jacobi iteration.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Off-diagonal Frobenius mass, relative to `‖A‖_F`, at which Jacobi stops.
pub const JACOBI_REL_TOL: f64 = 1e-12;

/// `A = Q diag(λ) Qᵀ` with eigenvalues ascending and eigenvectors stored as
/// the columns of a row-major `d x d` buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<f64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Row-major `Q`; column `k` is the eigenvector of `eigenvalues()[k]`.
    pub fn eigenvectors(&self) -> &[f64] {
        &self.eigenvectors
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }

    /// Largest eigenvalue in absolute value (the spectral norm).
    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Decomposition sharing these eigenvectors with new eigenvalues,
    /// columns re-sorted so eigenvalues stay ascending.
    pub fn with_eigenvalues(&self, values: Vec<f64>) -> SpectralDecomposition {
        let d = self.dim();
        assert_eq!(values.len(), d);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&x, &y| values[x].total_cmp(&values[y]));
        let eigenvalues = order.iter().map(|&k| values[k]).collect();
        let mut eigenvectors = vec![0.0; d * d];
        for (new_col, &old_col) in order.iter().enumerate() {
            for r in 0..d {
                eigenvectors[r * d + new_col] = self.eigenvectors[r * d + old_col];
            }
        }
        SpectralDecomposition {
            eigenvalues,
            eigenvectors,
        }
    }

    /// `Q diag(f(λ)) Qᵀ`.
    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> SymmetricMatrix {
        let mapped: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        self.compose(&mapped)
    }

    pub fn reconstruct(&self) -> SymmetricMatrix {
        self.compose(&self.eigenvalues)
    }

    /// `Q diag(values) Qᵀ`.
    pub fn compose(&self, values: &[f64]) -> SymmetricMatrix {
        let d = self.dim();
        assert_eq!(values.len(), d);
        let q = &self.eigenvectors;
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let mut acc = 0.0;
                for (k, v) in values.iter().enumerate() {
                    acc += q[i * d + k] * v * q[j * d + k];
                }
                data[i * d + j] = acc;
                data[j * d + i] = acc;
            }
        }
        SymmetricMatrix::symmetrized(d, data)
    }

    /// `Qᵀ M Q`.
    pub fn to_eigenbasis(&self, m: &SymmetricMatrix) -> SymmetricMatrix {
        let d = self.dim();
        let qt = transpose(d, &self.eigenvectors);
        let left = matmul(d, &qt, m.as_slice());
        SymmetricMatrix::symmetrized(d, matmul(d, &left, &self.eigenvectors))
    }

    /// `Q M Qᵀ`.
    pub fn from_eigenbasis(&self, m: &SymmetricMatrix) -> SymmetricMatrix {
        let d = self.dim();
        let qt = transpose(d, &self.eigenvectors);
        let left = matmul(d, &self.eigenvectors, m.as_slice());
        SymmetricMatrix::symmetrized(d, matmul(d, &left, &qt))
    }

    /// `‖QᵀQ − I‖_F`.
    pub fn orthogonality_error(&self) -> f64 {
        let d = self.dim();
        let qt = transpose(d, &self.eigenvectors);
        let qtq = matmul(d, &qt, &self.eigenvectors);
        let mut err = 0.0;
        for i in 0..d {
            for j in 0..d {
                let target = if i == j { 1.0 } else { 0.0 };
                err += (qtq[i * d + j] - target).powi(2);
            }
        }
        err.sqrt()
    }
}

fn transpose(d: usize, a: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[j * d + i] = a[i * d + j];
        }
    }
    out
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn sym_eig(a: &SymmetricMatrix) -> Result<SpectralDecomposition> {
    let d = a.dim();
    let mut w = a.as_slice().to_vec();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let threshold = JACOBI_REL_TOL * a.frobenius_norm();

    let mut converged = false;
    for sweep in 0..=JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(d, &w) <= threshold {
            converged = true;
            break;
        }
        if sweep == JACOBI_MAX_SWEEPS {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = w[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                rotate(d, &mut w, &mut v, p, q);
            }
        }
    }
    if !converged {
        return Err(Error::NumericalFailure(format!(
            "Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| w[x * d + x].total_cmp(&w[y * d + y]));
    let eigenvalues = order.iter().map(|&k| w[k * d + k]).collect();
    let mut eigenvectors = vec![0.0; d * d];
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..d {
            eigenvectors[r * d + new_col] = v[r * d + old_col];
        }
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(d: usize, w: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                s += w[i * d + j] * w[i * d + j];
            }
        }
    }
    s.sqrt()
}

/// Zeroes `w[p][q]` with one Jacobi rotation and accumulates it into `v`.
fn rotate(d: usize, w: &mut [f64], v: &mut [f64], p: usize, q: usize) {
    let apq = w[p * d + q];
    let app = w[p * d + p];
    let aqq = w[q * d + q];
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    w[p * d + p] = app - t * apq;
    w[q * d + q] = aqq + t * apq;
    w[p * d + q] = 0.0;
    w[q * d + p] = 0.0;
    for r in 0..d {
        if r == p || r == q {
            continue;
        }
        let arp = w[r * d + p];
        let arq = w[r * d + q];
        let new_rp = c * arp - s * arq;
        let new_rq = s * arp + c * arq;
        w[r * d + p] = new_rp;
        w[p * d + r] = new_rp;
        w[r * d + q] = new_rq;
        w[q * d + r] = new_rq;
    }
    for r in 0..d {
        let vrp = v[r * d + p];
        let vrq = v[r * d + q];
        v[r * d + p] = c * vrp - s * vrq;
        v[r * d + q] = s * vrp + c * vrq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::test_support::random_symmetric;

    #[test]
    fn identity_has_unit_spectrum() {
        let eig = sym_eig(&SymmetricMatrix::identity(3)).unwrap();
        assert_eq!(eig.eigenvalues(), &[1.0, 1.0, 1.0]);
        assert!(eig.orthogonality_error() < 1e-14);
    }

    #[test]
    fn diagonal_input_gives_permuted_identity() {
        let a = SymmetricMatrix::from_diagonal(&[9.0, 4.0]).unwrap();
        let eig = sym_eig(&a).unwrap();
        assert_eq!(eig.eigenvalues(), &[4.0, 9.0]);
        let q = eig.eigenvectors();
        for v in q {
            assert!(*v == 0.0 || v.abs() == 1.0);
        }
    }

    #[test]
    fn random_reconstruction_within_tolerance() {
        for seed in 0..20 {
            for d in [2, 5, 10, 30] {
                let a = random_symmetric(d, seed);
                let eig = sym_eig(&a).unwrap();
                let scale = a.frobenius_norm().max(1.0);
                assert!(eig.reconstruct().distance(&a) <= 1e-8 * scale);
                assert!(eig.orthogonality_error() <= 1e-8 * d as f64);
                assert!(eig.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn zero_matrix_is_trivially_converged() {
        let eig = sym_eig(&SymmetricMatrix::zeros(4)).unwrap();
        assert!(eig.eigenvalues().iter().all(|&l| l == 0.0));
    }

    #[test]
    fn eigenbasis_roundtrip() {
        let a = random_symmetric(6, 3);
        let g = random_symmetric(6, 4);
        let eig = sym_eig(&a).unwrap();
        let back = eig.from_eigenbasis(&eig.to_eigenbasis(&g));
        assert!(back.distance(&g) < 1e-12);
    }
}
