//! Dense symmetric linear algebra shared by every solver.

mod eigen;
mod matrix;
mod ops;

pub use eigen::{sym_eig, SpectralDecomposition, JACOBI_MAX_SWEEPS, JACOBI_REL_TOL};
pub use matrix::SymmetricMatrix;
pub use ops::{
    is_spd, log_det_prox, log_det_spd, soft_threshold, soft_threshold_matrix, spd_inverse,
    spd_sqrt, sylvester_sqrt_grad, sylvester_sqrt_grad_with, CholeskyFactor, LogDetProx,
    CHOLESKY_MIN_PIVOT, PSD_CLAMP, SYLVESTER_MIN_DENOM,
};

pub(crate) use ops::shrink;
