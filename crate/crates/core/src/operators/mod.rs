//! Linear forward and analysis operators with exact adjoints.
//!
//! Images are stored row-major: pixel `(i, j)` of an `n1 x n2` image lives at
//! index `i * n2 + j`.

mod convolution;
mod dense;
mod gradient;
mod mask;
mod risk_weight;
mod wavelet;

use std::fmt::Debug;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::Vector;

pub use convolution::{
    gaussian_kernel, lowpass_frequency_mask, make_periodic_convolution, make_random_sensing, PeriodicConvolution,
    RandomSensing,
};
pub use dense::{Composed, DenseMap, Identity};
pub use gradient::{make_discrete_gradient, DiscreteGradient};
pub use mask::{make_mask, Mask};
pub(crate) use risk_weight::explicit_gram;
pub use risk_weight::{least_squares, make_risk_weight, GramPinv, RiskMode, RiskWeight};
pub use wavelet::{daubechies4, make_undecimated_wavelet, UndecimatedWavelet};

/// Singular values below this fraction of the largest are treated as zero.
pub const PINV_REL_TOL: f64 = 1e-10;

/// A real linear operator `R^N -> R^P` together with its adjoint.
pub trait LinearMap: Send + Sync + Debug {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn apply(&self, x: &Vector) -> Vector;
    fn adjoint(&self, y: &Vector) -> Vector;
    /// Upper bound on the operator norm.
    fn norm_bound(&self) -> f64;

    /// Solves `(shift Id + scale Phi Phi^*) z = rhs` exactly when the
    /// operator structure allows it.
    fn solve_shifted_gram(&self, _shift: f64, _scale: f64, _rhs: &Vector) -> Option<Vector> {
        None
    }

    /// Applies `(Phi Phi^*)^+` exactly when the operator structure allows it.
    fn gram_pinv(&self, _rhs: &Vector, _rel_tol: f64) -> Option<Vector> {
        None
    }

    /// Exact trace of `(Phi Phi^*)^+` when available.
    fn gram_pinv_trace(&self, _rel_tol: f64) -> Option<f64> {
        None
    }

    /// Exact rank when available.
    fn gram_rank(&self, _rel_tol: f64) -> Option<usize> {
        None
    }
}

/// Largest relative violation of `<Ax, y> = <x, A^* y>` over random probes.
pub fn adjoint_mismatch<R: Rng + ?Sized>(op: &dyn LinearMap, probes: usize, rng: &mut R) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let x = Vector::from_fn(op.in_dim(), |_, _| rng.sample(StandardNormal));
        let y = Vector::from_fn(op.out_dim(), |_, _| rng.sample(StandardNormal));
        let ax = op.apply(&x);
        let aty = op.adjoint(&y);
        let lhs = ax.dot(&y);
        let rhs = x.dot(&aty);
        let scale = (ax.norm() * y.norm()).max(x.norm() * aty.norm()).max(1e-300);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    worst
}

/// Largest observed `||Ax|| / (norm_bound ||x||)` over random probes.
pub fn norm_bound_ratio<R: Rng + ?Sized>(op: &dyn LinearMap, probes: usize, rng: &mut R) -> f64 {
    let bound = op.norm_bound();
    (0..probes)
        .map(|_| {
            let x = Vector::from_fn(op.in_dim(), |_, _| rng.sample(StandardNormal));
            op.apply(&x).norm() / (bound * x.norm())
        })
        .fold(0.0, f64::max)
}
