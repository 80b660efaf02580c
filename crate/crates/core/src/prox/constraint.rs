use std::sync::Arc;

use super::{Linearization, Linearized, ParamVector, Penalty, ProxAtom};
use crate::error::{check_len, Result};
use crate::linalg::Vector;
use crate::operators::{DiscreteGradient, LinearMap};

/// Orthogonal projection of `(f, u)` onto `{(f, u) : u = grad f}`:
/// `f' = (Id + grad^* grad)^{-1}(f + grad^* u)`, `u' = grad f'`.
pub fn tv_constraint_prox(grad: &DiscreteGradient, f: &Vector, u: &Vector) -> (Vector, Vector) {
    let fp = grad.solve_identity_plus_laplacian(&(f + grad.adjoint(u)));
    let up = grad.apply(&fp);
    (fp, up)
}

/// The constraint projection on the stacked state `[f; u]`; independent of
/// the step and of `theta`.
#[derive(Debug, Clone)]
pub struct TvConstraintAtom {
    grad: Arc<DiscreteGradient>,
}

impl TvConstraintAtom {
    pub fn new(grad: Arc<DiscreteGradient>) -> Self {
        TvConstraintAtom { grad }
    }

    fn project(&self, state: &Vector) -> Vector {
        let n = self.grad.in_dim();
        let f = state.rows(0, n).into_owned();
        let u = state.rows(n, 2 * n).into_owned();
        let (fp, up) = tv_constraint_prox(&self.grad, &f, &u);
        let mut out = Vector::zeros(3 * n);
        out.rows_mut(0, n).copy_from(&fp);
        out.rows_mut(n, 2 * n).copy_from(&up);
        out
    }
}

struct ProjectorLin(TvConstraintAtom);

impl Linearization for ProjectorLin {
    fn jac_input(&self, dir: &Vector) -> Vector {
        self.0.project(dir)
    }
    fn jac_theta(&self, _k: usize) -> Option<Vector> {
        None
    }
}

impl ProxAtom for TvConstraintAtom {
    fn dim(&self) -> usize {
        3 * self.grad.in_dim()
    }

    fn linearize(&self, point: &Vector, _y: &Vector, _theta: &ParamVector) -> Result<Linearized> {
        check_len(point.len(), self.dim(), "constraint projection input")?;
        Ok(Linearized {
            value: self.project(point),
            lin: Box::new(ProjectorLin(self.clone())),
        })
    }
}

/// Indicator of the gradient-consistency set.
#[derive(Debug, Clone)]
pub struct TvConstraint {
    pub grad: Arc<DiscreteGradient>,
}

impl Penalty for TvConstraint {
    fn prox_atom(&self, _step: f64) -> Arc<dyn ProxAtom> {
        Arc::new(TvConstraintAtom::new(self.grad.clone()))
    }
}

/// Prox of the zero function: the identity.
#[derive(Debug, Clone)]
pub struct ZeroAtom {
    pub dim: usize,
}

struct IdentityLin;

impl Linearization for IdentityLin {
    fn jac_input(&self, dir: &Vector) -> Vector {
        dir.clone()
    }
    fn jac_theta(&self, _k: usize) -> Option<Vector> {
        None
    }
}

impl ProxAtom for ZeroAtom {
    fn dim(&self) -> usize {
        self.dim
    }

    fn linearize(&self, point: &Vector, _y: &Vector, _theta: &ParamVector) -> Result<Linearized> {
        check_len(point.len(), self.dim, "identity prox input")?;
        Ok(Linearized {
            value: point.clone(),
            lin: Box::new(IdentityLin),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ZeroPenalty {
    pub dim: usize,
}

impl Penalty for ZeroPenalty {
    fn prox_atom(&self, _step: f64) -> Arc<dyn ProxAtom> {
        Arc::new(ZeroAtom { dim: self.dim })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::make_discrete_gradient;
    use crate::prox::tests_support::{check_fd_input, check_nonexpansive, random_vec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn projection_properties() {
        let grad = Arc::new(make_discrete_gradient(6, 5).unwrap());
        let atom = TvConstraintAtom::new(grad.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = Vector::zeros(0);
        let th = ParamVector::scalar(1.0).unwrap();
        let n = 30;
        // Already feasible.
        let f = random_vec(n, &mut rng);
        let mut feasible = Vector::zeros(3 * n);
        feasible.rows_mut(0, n).copy_from(&f);
        feasible.rows_mut(n, 2 * n).copy_from(&grad.apply(&f));
        assert!((atom.eval(&feasible, &e, &th).unwrap() - &feasible).norm() < 1e-10);
        for _ in 0..10 {
            let s = random_vec(3 * n, &mut rng);
            let once = atom.eval(&s, &e, &th).unwrap();
            let twice = atom.eval(&once, &e, &th).unwrap();
            assert!((&twice - &once).norm() < 1e-8);
            let fo = once.rows(0, n).into_owned();
            assert!((grad.apply(&fo) - once.rows(n, 2 * n)).norm() < 1e-10);
            // Orthogonality of the residual to the constraint set.
            let g = random_vec(n, &mut rng);
            let mut dir = Vector::zeros(3 * n);
            dir.rows_mut(0, n).copy_from(&g);
            dir.rows_mut(n, 2 * n).copy_from(&grad.apply(&g));
            assert!((&s - &once).dot(&dir).abs() < 1e-9 * s.norm() * dir.norm());
            check_fd_input(&atom, &s, &e, &th, &mut rng, 1e-6);
        }
        check_nonexpansive(&atom, &e, &th, &mut rng);
    }
}
