use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::LinearMap;
use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Forward-difference gradient with replicate (Neumann) boundary.
///
/// Output layout is `[horizontal differences (N); vertical differences (N)]`,
/// so the two components of pixel `i` sit at `i` and `N + i`.
#[derive(Debug, Clone)]
pub struct DiscreteGradient {
    n1: usize,
    n2: usize,
    // Orthonormal DCT-II bases diagonalizing the Neumann Laplacian.
    dct_rows: DMatrix<f64>,
    dct_cols: DMatrix<f64>,
    eig_rows: Vec<f64>,
    eig_cols: Vec<f64>,
}

fn dct_basis(n: usize) -> (DMatrix<f64>, Vec<f64>) {
    let c = DMatrix::from_fn(n, n, |k, i| {
        let w = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        w * (PI * k as f64 * (i as f64 + 0.5) / n as f64).cos()
    });
    let eig = (0..n).map(|k| 2.0 - 2.0 * (PI * k as f64 / n as f64).cos()).collect();
    (c, eig)
}

pub fn make_discrete_gradient(n1: usize, n2: usize) -> Result<DiscreteGradient> {
    if n1 < 2 || n2 < 2 {
        return Err(Error::config(format!(
            "gradient needs at least a 2x2 grid, got {n1}x{n2}"
        )));
    }
    let (dct_rows, eig_rows) = dct_basis(n1);
    let (dct_cols, eig_cols) = dct_basis(n2);
    Ok(DiscreteGradient {
        n1,
        n2,
        dct_rows,
        dct_cols,
        eig_rows,
        eig_cols,
    })
}

impl DiscreteGradient {
    pub fn shape(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    /// Discrete divergence, `div = -grad^*`.
    pub fn divergence(&self, field: &Vector) -> Vector {
        -self.adjoint(field)
    }

    /// Solves `(Id + grad^* grad) f = rhs` exactly in the DCT domain.
    pub fn solve_identity_plus_laplacian(&self, rhs: &Vector) -> Vector {
        let (n1, n2) = (self.n1, self.n2);
        let img = DMatrix::from_row_slice(n1, n2, rhs.as_slice());
        let mut coeffs = &self.dct_rows * img * self.dct_cols.transpose();
        for i in 0..n1 {
            for j in 0..n2 {
                coeffs[(i, j)] /= 1.0 + self.eig_rows[i] + self.eig_cols[j];
            }
        }
        let out = self.dct_rows.transpose() * coeffs * &self.dct_cols;
        Vector::from_iterator(n1 * n2, out.transpose().iter().cloned())
    }
}

impl LinearMap for DiscreteGradient {
    fn in_dim(&self) -> usize {
        self.n1 * self.n2
    }
    fn out_dim(&self) -> usize {
        2 * self.n1 * self.n2
    }
    fn apply(&self, x: &Vector) -> Vector {
        let (n1, n2) = (self.n1, self.n2);
        let n = n1 * n2;
        let mut g = Vector::zeros(2 * n);
        for i in 0..n1 {
            for j in 0..n2 {
                let idx = i * n2 + j;
                if j + 1 < n2 {
                    g[idx] = x[idx + 1] - x[idx];
                }
                if i + 1 < n1 {
                    g[n + idx] = x[idx + n2] - x[idx];
                }
            }
        }
        g
    }
    fn adjoint(&self, t: &Vector) -> Vector {
        let (n1, n2) = (self.n1, self.n2);
        let n = n1 * n2;
        let mut out = Vector::zeros(n);
        for i in 0..n1 {
            for j in 0..n2 {
                let idx = i * n2 + j;
                if j + 1 < n2 {
                    out[idx + 1] += t[idx];
                    out[idx] -= t[idx];
                }
                if i + 1 < n1 {
                    out[idx + n2] += t[n + idx];
                    out[idx] -= t[n + idx];
                }
            }
        }
        out
    }
    fn norm_bound(&self) -> f64 {
        8f64.sqrt()
    }
}
