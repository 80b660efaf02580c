use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, Dyn};

use super::{Linearization, Linearized, ParamVector, ProxAtom};
use crate::error::{check_len, Error, Result};
use crate::linalg::{conjugate_gradient_partial, Vector};
use crate::operators::{explicit_gram, LinearMap};

const RESOLVENT_TOL: f64 = 1e-10;
const DIRECT_MAX: usize = 4096;

#[derive(Debug, Clone)]
enum ResolventKind {
    Structured,
    Dense(Cholesky<f64, Dyn>),
    Iterative,
}

/// `(Id + xi Phi Phi^*)^{-1}` on the observation space.
#[derive(Debug, Clone)]
pub struct Resolvent {
    phi: Arc<dyn LinearMap>,
    xi: f64,
    kind: ResolventKind,
}

impl Resolvent {
    pub fn new(phi: Arc<dyn LinearMap>, xi: f64) -> Result<Self> {
        if !(xi > 0.0) {
            return Err(Error::config(format!("resolvent step must be positive, got {xi}")));
        }
        let p = phi.out_dim();
        let kind = if phi.solve_shifted_gram(1.0, xi, &Vector::zeros(p)).is_some() {
            ResolventKind::Structured
        } else if p <= DIRECT_MAX {
            let m = DMatrix::identity(p, p) + explicit_gram(phi.as_ref()) * xi;
            ResolventKind::Dense(
                Cholesky::new(m).ok_or_else(|| Error::numerical("resolvent matrix is not positive definite"))?,
            )
        } else {
            ResolventKind::Iterative
        };
        Ok(Resolvent { phi, xi, kind })
    }

    /// Returns the solution and whether the inner solve met its tolerance.
    fn solve(&self, rhs: &Vector) -> (Vector, bool) {
        match &self.kind {
            ResolventKind::Structured => (
                self.phi
                    .solve_shifted_gram(1.0, self.xi, rhs)
                    .expect("structured resolvent"),
                true,
            ),
            ResolventKind::Dense(ch) => (ch.solve(rhs), true),
            ResolventKind::Iterative => {
                let op = |v: &Vector| v + self.phi.apply(&self.phi.adjoint(v)) * self.xi;
                let (x, resid) = conjugate_gradient_partial(op, rhs, RESOLVENT_TOL, 10 * rhs.len().max(100));
                (x, resid <= 10.0 * RESOLVENT_TOL)
            }
        }
    }

    /// `v - xi Phi^* (Id + xi Phi Phi^*)^{-1} Phi v`, i.e. `(Id + xi Phi^* Phi)^{-1} v`.
    fn apply_primal(&self, v: &Vector) -> (Vector, bool) {
        let (w, ok) = self.solve(&self.phi.apply(v));
        (v - self.phi.adjoint(&w) * self.xi, ok)
    }

    fn apply_primal_warn(&self, v: &Vector) -> Vector {
        let (out, ok) = self.apply_primal(v);
        if !ok {
            log::warn!("resolvent solve missed tolerance {RESOLVENT_TOL:e} in a derivative pass");
        }
        out
    }
}

/// `Prox_{xi H}` with `H(x, y) = ||Phi x - y||^2 / 2`.
pub fn quadratic_data_prox(x: &Vector, y: &Vector, xi: f64, phi: Arc<dyn LinearMap>) -> Result<Vector> {
    QuadraticDataAtom::new(phi, xi)?.eval(x, y, &ParamVector::scalar(1.0)?)
}

#[derive(Debug, Clone)]
pub struct QuadraticDataAtom {
    res: Arc<Resolvent>,
}

impl QuadraticDataAtom {
    pub fn new(phi: Arc<dyn LinearMap>, xi: f64) -> Result<Self> {
        Ok(QuadraticDataAtom {
            res: Arc::new(Resolvent::new(phi, xi)?),
        })
    }
}

struct QuadraticLin {
    res: Arc<Resolvent>,
}

impl Linearization for QuadraticLin {
    fn jac_input(&self, dir: &Vector) -> Vector {
        self.res.apply_primal_warn(dir)
    }
    fn jac_obs(&self, dir: &Vector) -> Option<Vector> {
        Some(self.res.apply_primal_warn(&(self.res.phi.adjoint(dir) * self.res.xi)))
    }
    fn jac_theta(&self, _k: usize) -> Option<Vector> {
        None
    }
}

impl ProxAtom for QuadraticDataAtom {
    fn dim(&self) -> usize {
        self.res.phi.in_dim()
    }

    fn linearize(&self, point: &Vector, y: &Vector, _theta: &ParamVector) -> Result<Linearized> {
        check_len(point.len(), self.dim(), "quadratic prox input")?;
        check_len(y.len(), self.res.phi.out_dim(), "quadratic prox observation")?;
        let v = point + self.res.phi.adjoint(y) * self.res.xi;
        let (value, ok) = self.res.apply_primal(&v);
        if !ok {
            return Err(Error::numerical("resolvent conjugate gradient did not converge"));
        }
        Ok(Linearized {
            value,
            lin: Box::new(QuadraticLin { res: self.res.clone() }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{make_mask, DenseMap, Identity};
    use crate::prox::tests_support::{check_fd_input, check_fd_obs, check_nonexpansive, random_vec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn identity_operator_gives_scalar_resolvent() {
        let phi: Arc<dyn LinearMap> = Arc::new(Identity::new(4));
        let x = Vector::from_vec(vec![1.0, 2.0, -1.0, 0.0]);
        let y = Vector::from_vec(vec![0.0, 1.0, 1.0, 3.0]);
        let out = quadratic_data_prox(&x, &y, 0.5, phi.clone()).unwrap();
        assert!((out - (&x + &y * 0.5) / 1.5).norm() < 1e-14);
        let tiny = quadratic_data_prox(&x, &y, 1e-12, phi).unwrap();
        assert!((tiny - &x).norm() < 1e-10);
    }

    #[test]
    fn dense_operator_solves_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = DMatrix::from_fn(5, 8, |_, _| rng.sample::<f64, _>(StandardNormal));
        let phi: Arc<dyn LinearMap> = Arc::new(DenseMap::new(m.clone()));
        let atom = QuadraticDataAtom::new(phi, 0.7).unwrap();
        let x = random_vec(8, &mut rng);
        let y = random_vec(5, &mut rng);
        let theta = ParamVector::scalar(1.0).unwrap();
        let z = atom.eval(&x, &y, &theta).unwrap();
        // Optimality: z - x + xi Phi^T (Phi z - y) = 0.
        let grad = &z - &x + m.transpose() * (&m * &z - &y) * 0.7;
        assert!(grad.norm() < 1e-10);
        check_fd_input(&atom, &x, &y, &theta, &mut rng, 1e-6);
        check_fd_obs(&atom, &x, &y, &theta, &mut rng, 1e-6);
        check_nonexpansive(&atom, &y, &theta, &mut rng);
        assert_eq!(atom.jac_theta(&x, &y, &theta).unwrap().norm(), 0.0);
    }

    #[test]
    fn structured_and_dense_routes_agree() {
        let mask = make_mask(6, &[0, 2, 3]).unwrap();
        let dense = DenseMap::new(DMatrix::from_fn(3, 6, |i, j| if [0, 2, 3][i] == j { 1.0 } else { 0.0 }));
        let a = QuadraticDataAtom::new(Arc::new(mask), 2.0).unwrap();
        let b = QuadraticDataAtom::new(Arc::new(dense), 2.0).unwrap();
        let x = Vector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.0]);
        let y = Vector::from_vec(vec![0.2, 0.3, -0.1]);
        let t = ParamVector::scalar(1.0).unwrap();
        assert!((a.eval(&x, &y, &t).unwrap() - b.eval(&x, &y, &t).unwrap()).norm() < 1e-12);
    }
}
