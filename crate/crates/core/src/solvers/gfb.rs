use std::sync::Arc;

use rayon::prelude::*;

use super::{check_finite, DualNumberState, Scheme, SmoothTerm, SolveOutput, SolverConfig};
use crate::error::{check_len, Error, Result};
use crate::linalg::Vector;
use crate::operators::LinearMap;
use crate::prox::{Linearized, ParamVector, Penalty, ProxAtom};

/// Generalized forward-backward splitting for
/// `min_a F(a) + sum_k G_k(a)` with `F` the least-squares term.
#[derive(Debug, Clone)]
pub struct GfbScheme {
    smooth: SmoothTerm,
    atoms: Vec<Arc<dyn ProxAtom>>,
    phi: Arc<dyn LinearMap>,
    state_dim: usize,
    nu: f64,
    iters: usize,
    residual_tol: f64,
}

impl GfbScheme {
    /// Builds `Prox_{nu Q G_k}` for every penalty.
    pub fn new(
        phi: Arc<dyn LinearMap>,
        penalties: &[Arc<dyn Penalty>],
        state_dim: usize,
        config: &SolverConfig,
    ) -> Result<Self> {
        if penalties.is_empty() {
            return Err(Error::config("forward-backward needs at least one prox term"));
        }
        let smooth = SmoothTerm::least_squares(phi.clone(), state_dim)?;
        let nu = config.check_gfb(smooth.lipschitz())?;
        let q = penalties.len() as f64;
        let atoms: Vec<_> = penalties.iter().map(|p| p.prox_atom(nu * q)).collect();
        for a in &atoms {
            check_len(a.dim(), state_dim, "prox atom dimension")?;
        }
        Ok(GfbScheme {
            smooth,
            atoms,
            phi,
            state_dim,
            nu,
            iters: config.max_iters,
            residual_tol: config.residual_tol,
        })
    }
}

fn mean(vs: &[&Vector]) -> Vector {
    let mut out = vs[0].clone();
    for v in &vs[1..] {
        out += *v;
    }
    out / vs.len() as f64
}

/// Runs the scheme from zero and returns `x`, `D_x` (when `delta` is given)
/// and the columns of `J_x` (when `jacobian` is set).
pub fn gfb_solve(
    scheme: &GfbScheme,
    y: &Vector,
    theta: &ParamVector,
    delta: Option<&Vector>,
    jacobian: bool,
) -> Result<SolveOutput> {
    let n = scheme.phi.in_dim();
    let m = scheme.state_dim;
    check_len(y.len(), scheme.phi.out_dim(), "observation")?;
    if let Some(d) = delta {
        check_len(d.len(), y.len(), "probe")?;
    }
    let n_params = if jacobian { theta.len() } else { 0 };
    let q = scheme.atoms.len();
    let mut z: Vec<DualNumberState> = (0..q)
        .map(|_| DualNumberState::zeros(m, delta.is_some(), n_params))
        .collect();
    let nu = scheme.nu;
    let mut jac_norms = Vec::with_capacity(if jacobian { scheme.iters } else { 0 });
    let mut x = Vector::zeros(m);
    let f_delta = delta.map(|d| scheme.smooth.obs_apply(d));

    for iter in 0..scheme.iters {
        x = mean(&z.iter().map(|s| &s.a).collect::<Vec<_>>());
        let dx = delta.map(|_| mean(&z.iter().map(|s| s.d.as_ref().unwrap()).collect::<Vec<_>>()));
        let jx: Vec<Vector> = (0..n_params)
            .map(|c| mean(&z.iter().map(|s| &s.j[c]).collect::<Vec<_>>()))
            .collect();

        let g = scheme.smooth.gradient(&x, y);
        let dg = dx
            .as_ref()
            .map(|d| scheme.smooth.hessian_apply(d) + f_delta.as_ref().unwrap());
        let jg: Vec<Vector> = jx.iter().map(|j| scheme.smooth.hessian_apply(j)).collect();

        for (k, state) in z.iter_mut().enumerate() {
            let arg = &x * 2.0 - &state.a - &g * nu;
            let Linearized { value, lin } = scheme.atoms[k].linearize(&arg, y, theta)?;
            state.a += &value - &x;
            if let (Some(d), Some(dx), Some(dg)) = (state.d.as_mut(), dx.as_ref(), dg.as_ref()) {
                let darg = dx * 2.0 - &*d - dg * nu;
                let mut step = lin.jac_input(&darg);
                if let Some(o) = lin.jac_obs(delta.unwrap()) {
                    step += o;
                }
                *d += step - dx;
            }
            let lin = &lin;
            state.j.par_iter_mut().enumerate().for_each(|(c, jc)| {
                let jarg = &jx[c] * 2.0 - &*jc - &jg[c] * nu;
                let mut step = lin.jac_input(&jarg);
                if let Some(t) = lin.jac_theta(c) {
                    step += t;
                }
                *jc += step - &jx[c];
            });
        }
        check_finite(&z[0].a, iter, "primal state")?;
        if jacobian {
            let total: f64 = (0..n_params)
                .map(|c| mean(&z.iter().map(|s| &s.j[c]).collect::<Vec<_>>()).norm_squared())
                .sum();
            jac_norms.push(total.sqrt());
        }
    }

    let x_final = mean(&z.iter().map(|s| &s.a).collect::<Vec<_>>());
    let residual = (&x_final - &x).norm() / x.norm().max(f64::MIN_POSITIVE);
    if residual > scheme.residual_tol {
        log::debug!(
            "forward-backward residual {residual:e} after {} iterations",
            scheme.iters
        );
    }
    let dx = delta.map(|_| mean(&z.iter().map(|s| s.d.as_ref().unwrap()).collect::<Vec<_>>()));
    let jx = (0..n_params)
        .map(|c| {
            mean(&z.iter().map(|s| &s.j[c]).collect::<Vec<_>>())
                .rows(0, n)
                .into_owned()
        })
        .collect();
    Ok(SolveOutput {
        x: x_final.rows(0, n).into_owned(),
        dx: dx.map(|d| d.rows(0, n).into_owned()),
        jx,
        residual,
        jac_norms,
    })
}

impl Scheme for GfbScheme {
    fn phi(&self) -> &Arc<dyn LinearMap> {
        &self.phi
    }

    fn solve(&self, y: &Vector, theta: &ParamVector, delta: Option<&Vector>, jacobian: bool) -> Result<SolveOutput> {
        gfb_solve(self, y, theta, delta, jacobian)
    }
}
