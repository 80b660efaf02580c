//! Proximal splitting schemes that carry, next to the primal iterates, their
//! directional derivative in `y` along a probe and their Jacobian in `theta`.
//!
//! All states, including the derivative states, start at zero and every run
//! uses a fixed number of iterations, so the estimate is a fixed function of
//! `(y, theta)`.

mod cp;
mod gfb;
mod run;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::operators::LinearMap;
use crate::prox::ParamVector;

pub use cp::{cp_solve, CpScheme};
pub use gfb::{gfb_solve, GfbScheme};
pub use run::{run_with_risk, Estimator, RiskConfig};

pub const DEFAULT_ITERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Steps {
    /// Gradient step `nu` of the generalized forward-backward scheme.
    Gfb { nu: f64 },
    /// Dual step `tau`, primal step `xi` and extrapolation `zeta`.
    Cp { tau: f64, xi: f64, zeta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub steps: Steps,
    /// Only used to flag the final fixed-point residual in logs.
    pub residual_tol: f64,
}

impl SolverConfig {
    pub fn gfb(nu: f64) -> Self {
        SolverConfig {
            max_iters: DEFAULT_ITERS,
            steps: Steps::Gfb { nu },
            residual_tol: 1e-6,
        }
    }

    pub fn cp(tau: f64, xi: f64, zeta: f64) -> Self {
        SolverConfig {
            max_iters: DEFAULT_ITERS,
            steps: Steps::Cp { tau, xi, zeta },
            residual_tol: 1e-6,
        }
    }

    pub fn with_iters(mut self, iters: usize) -> Self {
        self.max_iters = iters;
        self
    }

    /// Checks `nu in (0, 2/L)`.
    pub fn check_gfb(&self, lipschitz: f64) -> Result<f64> {
        match self.steps {
            Steps::Gfb { nu } if nu > 0.0 && nu * lipschitz < 2.0 && self.max_iters > 0 => Ok(nu),
            Steps::Gfb { nu } => Err(Error::config(format!(
                "forward-backward step {nu} outside (0, 2/L) with L = {lipschitz}, or zero iterations"
            ))),
            _ => Err(Error::config("expected forward-backward step sizes")),
        }
    }

    /// Checks `tau xi ||K||^2 < 1` and `zeta in [0, 1]`.
    pub fn check_cp(&self, k_norm: f64) -> Result<(f64, f64, f64)> {
        match self.steps {
            Steps::Cp { tau, xi, zeta } => {
                if !(tau > 0.0 && xi > 0.0) || tau * xi * k_norm * k_norm >= 1.0 {
                    return Err(Error::config(format!(
                        "primal-dual steps violate tau xi ||K||^2 < 1 (tau = {tau}, xi = {xi}, ||K|| <= {k_norm})"
                    )));
                }
                if !(0.0..=1.0).contains(&zeta) {
                    return Err(Error::config(format!("extrapolation {zeta} outside [0, 1]")));
                }
                if self.max_iters == 0 {
                    return Err(Error::config("zero iterations"));
                }
                Ok((tau, xi, zeta))
            }
            _ => Err(Error::config("expected primal-dual step sizes")),
        }
    }
}

/// The auxiliary state of a scheme with its derivative along the probe and
/// its parameter Jacobian (one column per parameter).
#[derive(Debug, Clone)]
pub struct DualNumberState {
    pub a: Vector,
    pub d: Option<Vector>,
    pub j: Vec<Vector>,
}

impl DualNumberState {
    pub fn zeros(dim: usize, with_d: bool, n_params: usize) -> Self {
        DualNumberState {
            a: Vector::zeros(dim),
            d: with_d.then(|| Vector::zeros(dim)),
            j: vec![Vector::zeros(dim); n_params],
        }
    }
}

/// Result of a fixed-budget solve.
#[derive(Debug, Clone)]
pub struct SolveOutput {
    /// The estimate `x` (the first `N` entries of the scheme state).
    pub x: Vector,
    /// `D_x`, present when a probe was supplied.
    pub dx: Option<Vector>,
    /// Columns of `J_x`, empty when not requested.
    pub jx: Vec<Vector>,
    /// Relative change of `x` over the last iteration.
    pub residual: f64,
    /// Frobenius norm of `J_x` after each iteration.
    pub jac_norms: Vec<f64>,
}

/// A solver with a fixed iteration budget seen as an estimator
/// `(y, theta) -> x`.
pub trait Scheme: Send + Sync {
    /// Forward operator mapping the estimate to the observation space.
    fn phi(&self) -> &Arc<dyn LinearMap>;

    fn solve(&self, y: &Vector, theta: &ParamVector, delta: Option<&Vector>, jacobian: bool) -> Result<SolveOutput>;
}

/// `F(a) = ||Phi a_{0..N} - y||^2 / 2` on a state whose first `N` entries
/// are the image.
#[derive(Debug, Clone)]
pub struct SmoothTerm {
    phi: Arc<dyn LinearMap>,
    state_dim: usize,
}

impl SmoothTerm {
    pub fn least_squares(phi: Arc<dyn LinearMap>, state_dim: usize) -> Result<Self> {
        if state_dim < phi.in_dim() {
            return Err(Error::config("state shorter than the operator domain"));
        }
        Ok(SmoothTerm { phi, state_dim })
    }

    pub fn lipschitz(&self) -> f64 {
        self.phi.norm_bound().powi(2)
    }

    fn embed(&self, v: Vector) -> Vector {
        if v.len() == self.state_dim {
            return v;
        }
        let mut out = Vector::zeros(self.state_dim);
        out.rows_mut(0, v.len()).copy_from(&v);
        out
    }

    fn head(&self, a: &Vector) -> Vector {
        a.rows(0, self.phi.in_dim()).into_owned()
    }

    pub fn gradient(&self, a: &Vector, y: &Vector) -> Vector {
        self.embed(self.phi.adjoint(&(self.phi.apply(&self.head(a)) - y)))
    }

    /// `F_x[d]`.
    pub fn hessian_apply(&self, d: &Vector) -> Vector {
        self.embed(self.phi.adjoint(&self.phi.apply(&self.head(d))))
    }

    /// `F_y[dy] = -Phi^* dy`.
    pub fn obs_apply(&self, dy: &Vector) -> Vector {
        self.embed(-self.phi.adjoint(dy))
    }
}

pub(crate) fn check_finite(v: &Vector, iter: usize, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::numerical(format!("non-finite {what} at iteration {iter}")))
    }
}
