use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `d x d` symmetric real matrix stored row-major.
///
/// Every constructor and arithmetic composite re-symmetrises by averaging
/// with the transpose, so `get(i, j) == get(j, i)` holds bit-exactly.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct SymmetricMatrix {
    dim: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for SymmetricMatrix {
    type Error = Error;
    fn try_from(raw: RawMatrix) -> Result<Self> {
        SymmetricMatrix::new(raw.dim, raw.data)
    }
}

impl From<SymmetricMatrix> for RawMatrix {
    fn from(m: SymmetricMatrix) -> Self {
        RawMatrix {
            dim: m.dim,
            data: m.data,
        }
    }
}

impl SymmetricMatrix {
    /// Builds a matrix from row-major entries, averaging `(A + Aᵀ) / 2`.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ShapeError("dimension must be positive".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::ShapeError(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(format!("non-finite entry {bad}")));
        }
        Ok(Self::symmetrized(dim, data))
    }

    /// Averages with the transpose. Used internally by composites whose
    /// inputs are already known to be finite.
    pub(crate) fn symmetrized(dim: usize, mut data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        for i in 0..dim {
            for j in (i + 1)..dim {
                let avg = 0.5 * (data[i * dim + j] + data[j * dim + i]);
                data[i * dim + j] = avg;
                data[j * dim + i] = avg;
            }
        }
        Self { dim, data }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self::new(dim, data)
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, value: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = value;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let dim = diag.len();
        Self::from_fn(dim, |i, j| if i == j { diag[i] } else { 0.0 })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set_sym(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.dim + j] = value;
        self.data[j * self.dim + i] = value;
    }

    /// Row-major entries.
    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    /// Frobenius inner product `tr(AᵀB)`.
    pub fn frobenius_dot(&self, other: &Self) -> f64 {
        self.check_same_dim(other);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.check_same_dim(other);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Entry-wise ℓ1 norm. With `include_diagonal == false` only off-diagonal
    /// entries are summed (both triangles).
    pub fn l1_norm(&self, include_diagonal: bool) -> f64 {
        let d = self.dim;
        let mut total = 0.0;
        for i in 0..d {
            for j in 0..d {
                if include_diagonal || i != j {
                    total += self.data[i * d + j].abs();
                }
            }
        }
        total
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn max_abs_off_diagonal(&self) -> f64 {
        let d = self.dim;
        let mut best = 0.0_f64;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    best = best.max(self.data[i * d + j].abs());
                }
            }
        }
        best
    }

    pub fn add_scaled_identity(&self, c: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.data[i * self.dim + i] += c;
        }
        out
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// Element-wise map. `f` must treat `(i, j)` and `(j, i)` identically for
    /// the result to stay symmetric; the result is re-symmetrised anyway.
    pub fn map_indexed(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let d = self.dim;
        let mut data = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                data.push(f(i, j, self.data[i * d + j]));
            }
        }
        Self::symmetrized(d, data)
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        self.map_indexed(|_, _, v| f(v))
    }

    /// `A * A`, symmetric for symmetric `A`.
    pub fn square(&self) -> Self {
        let d = self.dim;
        let prod = matmul(d, &self.data, &self.data);
        Self::symmetrized(d, prod)
    }

    /// `A * M * A` for symmetric `M`.
    pub fn sandwich(&self, middle: &Self) -> Self {
        self.check_same_dim(middle);
        let d = self.dim;
        let left = matmul(d, &self.data, &middle.data);
        Self::symmetrized(d, matmul(d, &left, &self.data))
    }

    /// `A * B + B * A`, the symmetric part of a product (times two).
    pub fn anticommutator(&self, other: &Self) -> Self {
        self.check_same_dim(other);
        let d = self.dim;
        let ab = matmul(d, &self.data, &other.data);
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                data[i * d + j] = ab[i * d + j] + ab[j * d + i];
            }
        }
        Self::symmetrized(d, data)
    }

    /// Plain product `A * B`, returned as a general row-major buffer (the
    /// product of two symmetric matrices is not symmetric in general).
    pub fn matmul_general(&self, other: &Self) -> Vec<f64> {
        self.check_same_dim(other);
        matmul(self.dim, &self.data, &other.data)
    }

    /// Conjugates by a permutation: `out[i][j] = self[perm[i]][perm[j]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.dim);
        let d = self.dim;
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                data[i * d + j] = self.data[perm[i] * d + perm[j]];
            }
        }
        Self { dim: d, data }
    }

    #[inline]
    fn check_same_dim(&self, other: &Self) {
        assert_eq!(
            self.dim, other.dim,
            "dimension mismatch: {} vs {}",
            self.dim, other.dim
        );
    }
}

/// Square row-major product `a * b`.
pub(crate) fn matmul(d: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        let row = &mut out[i * d..(i + 1) * d];
        for k in 0..d {
            let aik = a[i * d + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[k * d..(k + 1) * d];
            for (o, bkj) in row.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    out
}

impl fmt::Debug for SymmetricMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SymmetricMatrix({}x{})", self.dim, self.dim)?;
        for i in 0..self.dim {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v:>10.5}")).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

macro_rules! elementwise_binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<&SymmetricMatrix> for &SymmetricMatrix {
            type Output = SymmetricMatrix;
            fn $method(self, rhs: &SymmetricMatrix) -> SymmetricMatrix {
                self.check_same_dim(rhs);
                let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a $op b).collect();
                SymmetricMatrix::symmetrized(self.dim, data)
            }
        }
        impl $trait<SymmetricMatrix> for SymmetricMatrix {
            type Output = SymmetricMatrix;
            fn $method(self, rhs: SymmetricMatrix) -> SymmetricMatrix {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&SymmetricMatrix> for SymmetricMatrix {
            type Output = SymmetricMatrix;
            fn $method(self, rhs: &SymmetricMatrix) -> SymmetricMatrix {
                (&self).$method(rhs)
            }
        }
    };
}

elementwise_binop!(Add, add, +);
elementwise_binop!(Sub, sub, -);

impl AddAssign<&SymmetricMatrix> for SymmetricMatrix {
    fn add_assign(&mut self, rhs: &SymmetricMatrix) {
        self.check_same_dim(rhs);
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl SubAssign<&SymmetricMatrix> for SymmetricMatrix {
    fn sub_assign(&mut self, rhs: &SymmetricMatrix) {
        self.check_same_dim(rhs);
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

impl Mul<f64> for &SymmetricMatrix {
    type Output = SymmetricMatrix;
    fn mul(self, rhs: f64) -> SymmetricMatrix {
        self.scale(rhs)
    }
}

impl Mul<f64> for SymmetricMatrix {
    type Output = SymmetricMatrix;
    fn mul(self, rhs: f64) -> SymmetricMatrix {
        self.scale(rhs)
    }
}

impl Neg for &SymmetricMatrix {
    type Output = SymmetricMatrix;
    fn neg(self) -> SymmetricMatrix {
        self.scale(-1.0)
    }
}

impl Neg for SymmetricMatrix {
    type Output = SymmetricMatrix;
    fn neg(self) -> SymmetricMatrix {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_averages_with_transpose() {
        let m = SymmetricMatrix::new(2, vec![1.0, 2.0, 4.0, 3.0]).unwrap();
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), 3.0);
    }

    #[test]
    fn rejects_non_finite_and_bad_shape() {
        assert!(SymmetricMatrix::new(2, vec![1.0, f64::NAN, 0.0, 1.0]).is_err());
        assert!(SymmetricMatrix::new(2, vec![1.0, 0.0, 1.0]).is_err());
        assert!(SymmetricMatrix::new(0, vec![]).is_err());
    }

    #[test]
    fn l1_norm_respects_diagonal_flag() {
        let m = SymmetricMatrix::new(2, vec![2.0, -1.0, -1.0, 3.0]).unwrap();
        assert_eq!(m.l1_norm(true), 7.0);
        assert_eq!(m.l1_norm(false), 2.0);
    }

    #[test]
    fn sandwich_of_diagonals() {
        let a = SymmetricMatrix::from_diagonal(&[2.0, 3.0]).unwrap();
        let m = SymmetricMatrix::identity(2);
        let s = a.sandwich(&m);
        assert_eq!(s.as_slice(), &[4.0, 0.0, 0.0, 9.0]);
    }

    #[test]
    fn anticommutator_matches_explicit_products() {
        let a = SymmetricMatrix::new(2, vec![1.0, 2.0, 2.0, 0.5]).unwrap();
        let b = SymmetricMatrix::new(2, vec![0.0, 1.0, 1.0, 3.0]).unwrap();
        let ab = a.matmul_general(&b);
        let ba = b.matmul_general(&a);
        let ac = a.anticommutator(&b);
        for i in 0..2 {
            for j in 0..2 {
                assert!((ac.get(i, j) - (ab[i * 2 + j] + ba[i * 2 + j])).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn serde_roundtrip_symmetrizes() {
        let json = r#"{"dim":2,"data":[1.0,0.0,2.0,1.0]}"#;
        let m: SymmetricMatrix = serde_json::from_str(json).unwrap();
        assert_eq!(m.get(0, 1), 1.0);
        let back: SymmetricMatrix = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
