use std::sync::Arc;

use rayon::prelude::*;

use super::{check_finite, Scheme, SolveOutput, SolverConfig};
use crate::error::{check_len, Result};
use crate::linalg::Vector;
use crate::operators::LinearMap;
use crate::prox::{conjugate_prox, ParamVector, Penalty, ProxAtom, QuadraticDataAtom};

/// Relaxed Arrow-Hurwicz primal-dual scheme for `min_x H(x, y) + G(K x)`:
///
/// ```text
/// u+ = Prox_{tau G*}(u + tau K xbar)
/// x+ = Prox_{xi H}(x - xi K^* u+)
/// xbar+ = x+ + zeta (x+ - x)
/// ```
#[derive(Debug, Clone)]
pub struct CpScheme {
    h: Arc<dyn ProxAtom>,
    g_conj: Arc<dyn ProxAtom>,
    k: Arc<dyn LinearMap>,
    phi: Arc<dyn LinearMap>,
    tau: f64,
    xi: f64,
    zeta: f64,
    iters: usize,
    residual_tol: f64,
}

impl CpScheme {
    /// `H = ||Phi x - y||^2 / 2` and `G` given as a penalty on `K x`.
    pub fn least_squares(
        phi: Arc<dyn LinearMap>,
        k: Arc<dyn LinearMap>,
        g: &dyn Penalty,
        config: &SolverConfig,
    ) -> Result<Self> {
        let (tau, xi, _) = config.check_cp(k.norm_bound())?;
        let h: Arc<dyn ProxAtom> = Arc::new(QuadraticDataAtom::new(phi.clone(), xi)?);
        let g_conj: Arc<dyn ProxAtom> = Arc::new(conjugate_prox(g, tau)?);
        Self::with_atoms(phi, k, h, g_conj, config)
    }

    /// Uses the given `Prox_{xi H}` and `Prox_{tau G*}` atoms as they are.
    pub fn with_atoms(
        phi: Arc<dyn LinearMap>,
        k: Arc<dyn LinearMap>,
        h: Arc<dyn ProxAtom>,
        g_conj: Arc<dyn ProxAtom>,
        config: &SolverConfig,
    ) -> Result<Self> {
        let (tau, xi, zeta) = config.check_cp(k.norm_bound())?;
        check_len(h.dim(), k.in_dim(), "primal prox dimension")?;
        check_len(g_conj.dim(), k.out_dim(), "dual prox dimension")?;
        Ok(CpScheme {
            h,
            g_conj,
            k,
            phi,
            tau,
            xi,
            zeta,
            iters: config.max_iters,
            residual_tol: config.residual_tol,
        })
    }
}

struct Path {
    x: Vector,
    xbar: Vector,
    u: Vector,
}

impl Path {
    fn zeros(n: usize, p: usize) -> Self {
        Path {
            x: Vector::zeros(n),
            xbar: Vector::zeros(n),
            u: Vector::zeros(p),
        }
    }
}

pub fn cp_solve(
    scheme: &CpScheme,
    y: &Vector,
    theta: &ParamVector,
    delta: Option<&Vector>,
    jacobian: bool,
) -> Result<SolveOutput> {
    let n = scheme.k.in_dim();
    let p = scheme.k.out_dim();
    check_len(y.len(), scheme.phi.out_dim(), "observation")?;
    if let Some(d) = delta {
        check_len(d.len(), y.len(), "probe")?;
    }
    let (tau, xi, zeta) = (scheme.tau, scheme.xi, scheme.zeta);
    let n_params = if jacobian { theta.len() } else { 0 };
    let mut s = Path::zeros(n, p);
    let mut d = delta.map(|_| Path::zeros(n, p));
    let mut j: Vec<Path> = (0..n_params).map(|_| Path::zeros(n, p)).collect();
    let mut jac_norms = Vec::new();
    let mut residual = 0.0;

    for iter in 0..scheme.iters {
        let g = scheme
            .g_conj
            .linearize(&(&s.u + scheme.k.apply(&s.xbar) * tau), y, theta)?;
        let u_new = g.value;
        let h = scheme.h.linearize(&(&s.x - scheme.k.adjoint(&u_new) * xi), y, theta)?;
        let x_new = h.value;
        residual = (&x_new - &s.x).norm() / x_new.norm().max(f64::MIN_POSITIVE);
        s.xbar = &x_new + (&x_new - &s.x) * zeta;
        s.x = x_new;
        s.u = u_new;
        check_finite(&s.x, iter, "primal state")?;

        if let (Some(dp), Some(delta)) = (d.as_mut(), delta) {
            let mut du = g.lin.jac_input(&(&dp.u + scheme.k.apply(&dp.xbar) * tau));
            if let Some(o) = g.lin.jac_obs(delta) {
                du += o;
            }
            let mut dx = h.lin.jac_input(&(&dp.x - scheme.k.adjoint(&du) * xi));
            if let Some(o) = h.lin.jac_obs(delta) {
                dx += o;
            }
            dp.xbar = &dx + (&dx - &dp.x) * zeta;
            dp.x = dx;
            dp.u = du;
        }
        let (gl, hl) = (&g.lin, &h.lin);
        j.par_iter_mut().enumerate().for_each(|(c, jp)| {
            let mut ju = gl.jac_input(&(&jp.u + scheme.k.apply(&jp.xbar) * tau));
            if let Some(t) = gl.jac_theta(c) {
                ju += t;
            }
            let mut jx = hl.jac_input(&(&jp.x - scheme.k.adjoint(&ju) * xi));
            if let Some(t) = hl.jac_theta(c) {
                jx += t;
            }
            jp.xbar = &jx + (&jx - &jp.x) * zeta;
            jp.x = jx;
            jp.u = ju;
        });
        if jacobian {
            jac_norms.push(j.iter().map(|jp| jp.x.norm_squared()).sum::<f64>().sqrt());
        }
    }
    if residual > scheme.residual_tol {
        log::debug!("primal-dual residual {residual:e} after {} iterations", scheme.iters);
    }
    Ok(SolveOutput {
        x: s.x,
        dx: d.map(|dp| dp.x),
        jx: j.into_iter().map(|jp| jp.x).collect(),
        residual,
        jac_norms,
    })
}

impl Scheme for CpScheme {
    fn phi(&self) -> &Arc<dyn LinearMap> {
        &self.phi
    }

    fn solve(&self, y: &Vector, theta: &ParamVector, delta: Option<&Vector>, jacobian: bool) -> Result<SolveOutput> {
        cp_solve(self, y, theta, delta, jacobian)
    }
}
