//! Proximal operators together with their weak derivatives in the input,
//! in the observation and in the regularization parameters.
//!
//! Every atom is built for a fixed step `gamma`, i.e. it realizes
//! `Prox_{gamma G}`; the parameter Jacobian already carries the factor
//! `gamma` of the chain rule.

mod conjugate;
mod constraint;
mod nuclear;
mod quadratic;
mod threshold;

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

pub use conjugate::{conjugate_prox, ConjugateAtom};
pub use constraint::{tv_constraint_prox, TvConstraint, TvConstraintAtom, ZeroAtom, ZeroPenalty};
pub use nuclear::{nuclear_prox, nuclear_prox_jac_input, nuclear_prox_jac_theta, NuclearAtom, NuclearPenalty};
pub use quadratic::{quadratic_data_prox, QuadraticDataAtom, Resolvent};
pub use threshold::{
    block_soft_threshold, block_soft_threshold_jacs, multiscale_soft_threshold, soft_threshold, soft_threshold_jacs,
    BlockL12Penalty, BlockSoftThresholdAtom, L1Penalty, ParamLayout, SoftThresholdAtom,
};

/// Strictly positive regularization weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("parameter vector is empty"));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::config(format!(
                "regularization weights must be positive and finite, got {v}"
            )));
        }
        Ok(ParamVector(values))
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(vec![value])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, k: usize) -> f64 {
        self.0[k]
    }

    pub fn to_vector(&self) -> Vector {
        Vector::from_column_slice(&self.0)
    }
}

/// Derivatives of a prox at one point, captured while evaluating it.
pub trait Linearization: Send + Sync {
    /// Weak directional derivative in the first argument.
    fn jac_input(&self, dir: &Vector) -> Vector;
    /// Weak directional derivative in `y`; `None` when the atom ignores `y`.
    fn jac_obs(&self, _dir: &Vector) -> Option<Vector> {
        None
    }
    /// Column `k` of the parameter Jacobian; `None` when identically zero.
    fn jac_theta(&self, k: usize) -> Option<Vector>;
}

/// Prox value at a point and its linearization there.
pub struct Linearized {
    pub value: Vector,
    pub lin: Box<dyn Linearization>,
}

/// `(point, y, theta) -> Prox_{gamma G(., y, theta)}(point)` and its weak derivatives.
pub trait ProxAtom: Send + Sync + Debug {
    fn dim(&self) -> usize;

    fn linearize(&self, point: &Vector, y: &Vector, theta: &ParamVector) -> Result<Linearized>;

    fn eval(&self, point: &Vector, y: &Vector, theta: &ParamVector) -> Result<Vector> {
        Ok(self.linearize(point, y, theta)?.value)
    }

    fn jac_input(&self, point: &Vector, y: &Vector, theta: &ParamVector, dir: &Vector) -> Result<Vector> {
        Ok(self.linearize(point, y, theta)?.lin.jac_input(dir))
    }

    fn jac_obs(&self, point: &Vector, y: &Vector, theta: &ParamVector, dir: &Vector) -> Result<Vector> {
        Ok(self
            .linearize(point, y, theta)?
            .lin
            .jac_obs(dir)
            .unwrap_or_else(|| Vector::zeros(self.dim())))
    }

    /// Dense `dim x dim(theta)` parameter Jacobian.
    fn jac_theta(&self, point: &Vector, y: &Vector, theta: &ParamVector) -> Result<DMatrix<f64>> {
        let lin = self.linearize(point, y, theta)?.lin;
        let mut m = DMatrix::zeros(self.dim(), theta.len());
        for k in 0..theta.len() {
            if let Some(col) = lin.jac_theta(k) {
                m.set_column(k, &col);
            }
        }
        Ok(m)
    }
}

/// A regularizer `G(., theta)` that can hand out its prox at any step.
pub trait Penalty: Send + Sync + Debug {
    fn prox_atom(&self, step: f64) -> Arc<dyn ProxAtom>;
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    pub fn random_vec<R: Rng>(n: usize, rng: &mut R) -> Vector {
        Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
    }

    fn rel(a: &Vector, b: &Vector) -> f64 {
        (a - b).norm() / a.norm().max(b.norm()).max(1e-12)
    }

    pub fn check_fd_input<R: Rng>(
        atom: &dyn ProxAtom,
        point: &Vector,
        y: &Vector,
        theta: &ParamVector,
        rng: &mut R,
        tol: f64,
    ) {
        let dir = random_vec(atom.dim(), rng);
        let h = 1e-6 * point.norm().max(1.0) / dir.norm();
        let plus = atom.eval(&(point + h * &dir), y, theta).unwrap();
        let minus = atom.eval(&(point - h * &dir), y, theta).unwrap();
        let fd = (plus - minus) / (2.0 * h);
        let jac = atom.jac_input(point, y, theta, &dir).unwrap();
        let err = rel(&fd, &jac);
        assert!(err < tol, "{atom:?}: input jacobian error {err:e}");
    }

    pub fn check_fd_obs<R: Rng>(
        atom: &dyn ProxAtom,
        point: &Vector,
        y: &Vector,
        theta: &ParamVector,
        rng: &mut R,
        tol: f64,
    ) {
        let dir = random_vec(y.len(), rng);
        let h = 1e-6 * y.norm().max(1.0) / dir.norm();
        let plus = atom.eval(point, &(y + h * &dir), theta).unwrap();
        let minus = atom.eval(point, &(y - h * &dir), theta).unwrap();
        let fd = (plus - minus) / (2.0 * h);
        let jac = atom.jac_obs(point, y, theta, &dir).unwrap();
        let err = rel(&fd, &jac);
        assert!(err < tol, "{atom:?}: observation jacobian error {err:e}");
    }

    pub fn check_fd_theta(atom: &dyn ProxAtom, point: &Vector, y: &Vector, theta: &ParamVector, tol: f64) {
        let jac = atom.jac_theta(point, y, theta).unwrap();
        for k in 0..theta.len() {
            let h = 1e-6 * theta.get(k);
            let mut up = theta.values().to_vec();
            let mut down = up.clone();
            up[k] += h;
            down[k] -= h;
            let plus = atom.eval(point, y, &ParamVector::new(up).unwrap()).unwrap();
            let minus = atom.eval(point, y, &ParamVector::new(down).unwrap()).unwrap();
            let fd = (plus - minus) / (2.0 * h);
            let err = rel(&fd, &jac.column(k).into_owned());
            assert!(err < tol, "{atom:?}: theta jacobian column {k} error {err:e}");
        }
    }

    pub fn check_nonexpansive<R: Rng>(atom: &dyn ProxAtom, y: &Vector, theta: &ParamVector, rng: &mut R) {
        for _ in 0..50 {
            let a = random_vec(atom.dim(), rng) * 2.0;
            let b = random_vec(atom.dim(), rng) * 2.0;
            let pa = atom.eval(&a, y, theta).unwrap();
            let pb = atom.eval(&b, y, theta).unwrap();
            assert!((pa - pb).norm() <= (1.0 + 1e-12) * (&a - &b).norm(), "{atom:?} expands");
        }
    }
}
