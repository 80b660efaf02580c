use std::sync::Arc;

use super::{Linearization, Linearized, ParamVector, Penalty, ProxAtom};
use crate::error::{Error, Result};
use crate::linalg::Vector;

/// `Prox_{tau G^*}` obtained from `Prox_{G/tau}` by Moreau's identity
/// `Prox_{tau G^*}(u) = u - tau Prox_{G/tau}(u / tau)`.
#[derive(Debug, Clone)]
pub struct ConjugateAtom {
    inner: Arc<dyn ProxAtom>,
    tau: f64,
}

pub fn conjugate_prox(penalty: &dyn Penalty, tau: f64) -> Result<ConjugateAtom> {
    if !(tau > 0.0) {
        return Err(Error::config(format!("dual step must be positive, got {tau}")));
    }
    Ok(ConjugateAtom {
        inner: penalty.prox_atom(1.0 / tau),
        tau,
    })
}

impl ConjugateAtom {
    /// The wrapped `Prox_{G/tau}`.
    pub fn inner(&self) -> &Arc<dyn ProxAtom> {
        &self.inner
    }
}

struct ConjugateLin {
    inner: Box<dyn Linearization>,
    tau: f64,
}

impl Linearization for ConjugateLin {
    fn jac_input(&self, dir: &Vector) -> Vector {
        // The inner derivative is linear, so the 1/tau and tau factors cancel.
        dir - self.inner.jac_input(dir)
    }
    fn jac_obs(&self, dir: &Vector) -> Option<Vector> {
        self.inner.jac_obs(dir).map(|v| v * -self.tau)
    }
    fn jac_theta(&self, k: usize) -> Option<Vector> {
        self.inner.jac_theta(k).map(|v| v * -self.tau)
    }
}

impl ProxAtom for ConjugateAtom {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn linearize(&self, point: &Vector, y: &Vector, theta: &ParamVector) -> Result<Linearized> {
        let inner = self.inner.linearize(&(point / self.tau), y, theta)?;
        Ok(Linearized {
            value: point - inner.value * self.tau,
            lin: Box::new(ConjugateLin {
                inner: inner.lin,
                tau: self.tau,
            }),
        })
    }
}
