//! Small numerical helpers shared by the operator, prox and risk modules.

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;

/// Conjugate gradient for a symmetric positive (semi)definite operator.
///
/// Stops when the residual falls below `tol * ||b||`. For singular systems
/// with a consistent right-hand side started from zero, the iterates stay in
/// the range of the operator and converge to the minimum-norm solution.
pub fn conjugate_gradient<F>(apply: F, b: &Vector, tol: f64, max_iter: usize) -> Result<Vector>
where
    F: Fn(&Vector) -> Vector,
{
    let (x, resid) = conjugate_gradient_partial(apply, b, tol, max_iter);
    if resid <= tol * 10.0 {
        return Ok(x);
    }
    Err(Error::numerical(format!(
        "conjugate gradient did not reach tolerance {tol:e} in {max_iter} iterations (residual {resid:e})"
    )))
}

/// Like [`conjugate_gradient`] but always returns the last iterate together
/// with its relative residual.
pub fn conjugate_gradient_partial<F>(apply: F, b: &Vector, tol: f64, max_iter: usize) -> (Vector, f64)
where
    F: Fn(&Vector) -> Vector,
{
    let mut x = Vector::zeros(b.len());
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return (x, 0.0);
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs = r.dot(&r);
    for _ in 0..max_iter {
        if rs.sqrt() <= tol * b_norm {
            break;
        }
        let ap = apply(&p);
        let curvature = p.dot(&ap);
        if curvature <= 0.0 {
            // Remaining residual lies in the null space.
            return (x, 0.0);
        }
        let alpha = rs / curvature;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rs_next = r.dot(&r);
        p = &r + (rs_next / rs) * &p;
        rs = rs_next;
    }
    (x, rs.sqrt() / b_norm)
}

/// Hutchinson trace estimate with Rademacher probes.
pub fn hutchinson_trace<F, R>(mut apply: F, dim: usize, probes: usize, rng: &mut R) -> f64
where
    F: FnMut(&Vector) -> Vector,
    R: Rng + ?Sized,
{
    let mut acc = 0.0;
    for _ in 0..probes {
        let z = Vector::from_fn(dim, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
        acc += z.dot(&apply(&z));
    }
    acc / probes as f64
}

/// Cached forward/inverse FFT plans for a row-major `n1 x n2` grid.
#[derive(Clone)]
pub struct Fft2 {
    n1: usize,
    n2: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.n1, self.n2)
    }
}

impl Fft2 {
    pub fn new(n1: usize, n2: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            n1,
            n2,
            row_fwd: planner.plan_fft_forward(n2),
            row_inv: planner.plan_fft_inverse(n2),
            col_fwd: planner.plan_fft_forward(n1),
            col_inv: planner.plan_fft_inverse(n1),
        }
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        for chunk in data.chunks_exact_mut(self.n2) {
            row.process(chunk);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); self.n1];
        for j in 0..self.n2 {
            for i in 0..self.n1 {
                column[i] = data[i * self.n2 + j];
            }
            col.process(&mut column);
            for i in 0..self.n1 {
                data[i * self.n2 + j] = column[i];
            }
        }
        if inverse {
            let scale = 1.0 / (self.n1 * self.n2) as f64;
            for v in data.iter_mut() {
                *v *= scale;
            }
        }
    }

    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        data
    }

    /// Inverse transform keeping the real part.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spectrum, true);
        spectrum.into_iter().map(|c| c.re).collect()
    }

    /// `Re(F^-1 diag(multiplier) F x)`.
    pub fn filter(&self, x: &[f64], multiplier: impl Fn(usize) -> Complex64) -> Vec<f64> {
        let mut spec = self.forward_real(x);
        for (k, v) in spec.iter_mut().enumerate() {
            *v *= multiplier(k);
        }
        self.inverse_real(spec)
    }
}

/// Relative discrepancy `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_diff(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
