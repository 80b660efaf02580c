use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};

use super::LinearMap;
use crate::linalg::Vector;

/// Identity on `R^n`.
#[derive(Debug, Clone)]
pub struct Identity {
    n: usize,
}

impl Identity {
    pub fn new(n: usize) -> Self {
        Identity { n }
    }
}

impl LinearMap for Identity {
    fn in_dim(&self) -> usize {
        self.n
    }
    fn out_dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &Vector) -> Vector {
        x.clone()
    }
    fn adjoint(&self, y: &Vector) -> Vector {
        y.clone()
    }
    fn norm_bound(&self) -> f64 {
        1.0
    }
    fn solve_shifted_gram(&self, shift: f64, scale: f64, rhs: &Vector) -> Option<Vector> {
        Some(rhs / (shift + scale))
    }
    fn gram_pinv(&self, rhs: &Vector, _rel_tol: f64) -> Option<Vector> {
        Some(rhs.clone())
    }
    fn gram_pinv_trace(&self, _rel_tol: f64) -> Option<f64> {
        Some(self.n as f64)
    }
    fn gram_rank(&self, _rel_tol: f64) -> Option<usize> {
        Some(self.n)
    }
}

/// Explicit matrix operator, for small problems and tests.
#[derive(Debug)]
pub struct DenseMap {
    matrix: DMatrix<f64>,
    norm: f64,
    gram_eigen: OnceLock<SymmetricEigen<f64, nalgebra::Dyn>>,
}

impl DenseMap {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        let norm = matrix.singular_values().iter().cloned().fold(0.0, f64::max);
        DenseMap {
            matrix,
            norm: norm * (1.0 + 1e-12),
            gram_eigen: OnceLock::new(),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    fn eigen(&self) -> &SymmetricEigen<f64, nalgebra::Dyn> {
        self.gram_eigen
            .get_or_init(|| SymmetricEigen::new(&self.matrix * self.matrix.transpose()))
    }
}

impl LinearMap for DenseMap {
    fn in_dim(&self) -> usize {
        self.matrix.ncols()
    }
    fn out_dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn apply(&self, x: &Vector) -> Vector {
        &self.matrix * x
    }
    fn adjoint(&self, y: &Vector) -> Vector {
        self.matrix.tr_mul(y)
    }
    fn norm_bound(&self) -> f64 {
        self.norm
    }
    fn solve_shifted_gram(&self, shift: f64, scale: f64, rhs: &Vector) -> Option<Vector> {
        let eig = self.eigen();
        let coeffs = eig.eigenvectors.tr_mul(rhs);
        let scaled = Vector::from_fn(coeffs.len(), |i, _| coeffs[i] / (shift + scale * eig.eigenvalues[i]));
        Some(&eig.eigenvectors * scaled)
    }
    fn gram_pinv(&self, rhs: &Vector, rel_tol: f64) -> Option<Vector> {
        let eig = self.eigen();
        let cut = rel_tol * eig.eigenvalues.amax();
        let coeffs = eig.eigenvectors.tr_mul(rhs);
        let scaled = Vector::from_fn(coeffs.len(), |i, _| {
            let l = eig.eigenvalues[i];
            if l > cut {
                coeffs[i] / l
            } else {
                0.0
            }
        });
        Some(&eig.eigenvectors * scaled)
    }
    fn gram_pinv_trace(&self, rel_tol: f64) -> Option<f64> {
        let eig = self.eigen();
        let cut = rel_tol * eig.eigenvalues.amax();
        Some(eig.eigenvalues.iter().filter(|&&l| l > cut).map(|l| 1.0 / l).sum())
    }
    fn gram_rank(&self, rel_tol: f64) -> Option<usize> {
        let eig = self.eigen();
        let cut = rel_tol * eig.eigenvalues.amax();
        Some(eig.eigenvalues.iter().filter(|&&l| l > cut).count())
    }
}

/// `outer ∘ inner`.
#[derive(Debug, Clone)]
pub struct Composed {
    pub outer: Arc<dyn LinearMap>,
    pub inner: Arc<dyn LinearMap>,
}

impl LinearMap for Composed {
    fn in_dim(&self) -> usize {
        self.inner.in_dim()
    }
    fn out_dim(&self) -> usize {
        self.outer.out_dim()
    }
    fn apply(&self, x: &Vector) -> Vector {
        self.outer.apply(&self.inner.apply(x))
    }
    fn adjoint(&self, y: &Vector) -> Vector {
        self.inner.adjoint(&self.outer.adjoint(y))
    }
    fn norm_bound(&self) -> f64 {
        self.outer.norm_bound() * self.inner.norm_bound()
    }
}
