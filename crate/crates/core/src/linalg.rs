//! Small symmetric-matrix helpers shared by the information, solver, and
//! bound modules. Everything routes through one eigendecomposition so that
//! singularity handling is uniform: eigenvalues below
//! `SINGULAR_FLOOR_REL * lambda_max` mean the matrix is treated as singular.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const SINGULAR_FLOOR_REL: f64 = 1e-12;

pub struct SymEigen {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector of `values[k]`.
    pub vectors: DMatrix<f64>,
}

/// Symmetric eigendecomposition with a deterministic (ascending) eigenvalue
/// order. The input is symmetrized first to wash out accumulation asymmetry.
pub fn sym_eigen(m: &DMatrix<f64>) -> SymEigen {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    SymEigen { values, vectors }
}

impl SymEigen {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn is_singular(&self) -> bool {
        self.min() <= SINGULAR_FLOOR_REL * self.max().max(0.0)
    }

    fn singular_error(&self) -> Error {
        Error::SingularInformation {
            null_direction: self.vectors.column(0).iter().copied().collect(),
        }
    }

    /// `tr(M^{-1} L)` through the factorization, never an explicit inverse:
    /// `sum_k q_k' L q_k / lambda_k`.
    pub fn trace_inv_product(&self, l: &DMatrix<f64>) -> Result<f64> {
        if self.is_singular() {
            return Err(self.singular_error());
        }
        let mut total = 0.0;
        for (k, &lambda) in self.values.iter().enumerate() {
            let q = self.vectors.column(k);
            total += q.dot(&(l * q)) / lambda;
        }
        Ok(total)
    }

    /// `M^{-1} L M^{-1}` via the factorization.
    pub fn inv_sandwich(&self, l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let inv = self.inverse()?;
        Ok(&inv * l * &inv)
    }

    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        if self.is_singular() {
            return Err(self.singular_error());
        }
        Ok(self.map_spectrum(|v| 1.0 / v))
    }

    pub fn inv_sqrt(&self) -> Result<DMatrix<f64>> {
        if self.is_singular() {
            return Err(self.singular_error());
        }
        Ok(self.map_spectrum(|v| 1.0 / v.sqrt()))
    }

    fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.values.len();
        let mut out = DMatrix::zeros(n, n);
        for (k, &v) in self.values.iter().enumerate() {
            let q = self.vectors.column(k);
            out += q * q.transpose() * f(v);
        }
        out
    }
}

/// Minimum eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).min()
}
