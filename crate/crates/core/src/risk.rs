//! Stein unbiased risk estimates, their degrees-of-freedom terms and the
//! finite-difference gradient estimator.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::Vector;
use crate::operators::RiskWeight;

/// Largest dimension for which the canonical-basis finite difference is run.
pub const FD_MAX_DIM: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    ClosedForm,
    #[serde(rename = "MC")]
    Mc,
    #[serde(rename = "FD")]
    Fd,
    #[serde(rename = "FDMC")]
    Fdmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub sure_value: f64,
    pub dof_estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sugar_gradient: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<Vec<f64>>,
    pub variant: Variant,
    /// Number of full solver runs spent on this report.
    pub solver_passes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    sigma: f64,
}

impl NoiseModel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::config(format!("noise level must be positive, got {sigma}")));
        }
        Ok(NoiseModel { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// `||A(mu - y)||^2 - sigma^2 tr(A^*A) + 2 sigma^2 dof`.
pub fn sure_value(mu: &Vector, dof: f64, y: &Vector, weight: &RiskWeight, sigma: f64) -> Result<f64> {
    check_len(mu.len(), y.len(), "estimate vs observation")?;
    let r = mu - y;
    Ok(weight.weighted_sq_norm(&r)? - sigma * sigma * weight.trace_ata() + 2.0 * sigma * sigma * dof)
}

/// SURE with a known trace `tr(A d_1 mu A^*)`.
pub fn sure_closed_form(
    mu: &Vector,
    trace_jac: f64,
    y: &Vector,
    weight: &RiskWeight,
    sigma: f64,
) -> Result<RiskReport> {
    Ok(RiskReport {
        sure_value: sure_value(mu, trace_jac, y, weight, sigma)?,
        dof_estimate: trace_jac,
        sugar_gradient: None,
        epsilon: None,
        probe: None,
        variant: Variant::ClosedForm,
        solver_passes: 0,
    })
}

/// `<D_mu, A^*A delta>`.
pub fn dof_mc(d_mu: &Vector, delta: &Vector, weight: &RiskWeight) -> Result<f64> {
    check_len(d_mu.len(), delta.len(), "directional derivative vs probe")?;
    Ok(d_mu.dot(&weight.apply_ata(delta)?))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::config(format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    Ok(())
}

/// Canonical-basis finite-difference trace
/// `(1/eps) sum_i (A^*A (mu(y + eps e_i) - mu(y)))_i`.
pub fn dof_fd<F>(mu_at: F, y: &Vector, eps: f64, weight: &RiskWeight) -> Result<f64>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    check_eps(eps)?;
    let p = y.len();
    if p > FD_MAX_DIM {
        return Err(Error::config(format!(
            "dof_fd needs {} evaluations for P = {p}; use dof_fdmc instead",
            p + 1
        )));
    }
    let base = mu_at(y)?;
    let mut acc = 0.0;
    let mut yp = y.clone();
    for i in 0..p {
        yp[i] += eps;
        let diff = mu_at(&yp)? - &base;
        yp[i] = y[i];
        acc += weight.apply_ata(&diff)?[i];
    }
    Ok(acc / eps)
}

/// `(1/eps) <mu(y + eps delta) - mu(y), A^*A delta>` from the two estimates.
pub fn dof_fdmc_from(mu: &Vector, mu_pert: &Vector, eps: f64, delta: &Vector, weight: &RiskWeight) -> Result<f64> {
    check_eps(eps)?;
    check_len(mu_pert.len(), mu.len(), "perturbed estimate")?;
    check_len(delta.len(), mu.len(), "probe")?;
    Ok((mu_pert - mu).dot(&weight.apply_ata(delta)?) / eps)
}

pub fn dof_fdmc<F>(mu_at: F, y: &Vector, eps: f64, delta: &Vector, weight: &RiskWeight) -> Result<f64>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    check_eps(eps)?;
    let mu = mu_at(y)?;
    let mu_pert = mu_at(&(y + delta * eps))?;
    dof_fdmc_from(&mu, &mu_pert, eps, delta, weight)
}

/// SURE with the FDMC degrees of freedom.
pub fn sure_fdmc(
    mu: &Vector,
    mu_pert: &Vector,
    y: &Vector,
    eps: f64,
    delta: &Vector,
    weight: &RiskWeight,
    sigma: f64,
) -> Result<f64> {
    let dof = dof_fdmc_from(mu, mu_pert, eps, delta, weight)?;
    sure_value(mu, dof, y, weight, sigma)
}

/// Gradient of [`sure_fdmc`] in `theta`:
/// `2 J^T A^*A (mu - y) + (2 sigma^2 / eps) (J(y + eps delta) - J(y))^T A^*A delta`,
/// with `J` the Jacobian of `mu` in `theta` given column by column.
#[allow(clippy::too_many_arguments)]
pub fn sugar_fdmc(
    j_at_y: &[Vector],
    j_at_pert: &[Vector],
    mu: &Vector,
    y: &Vector,
    eps: f64,
    delta: &Vector,
    weight: &RiskWeight,
    sigma: f64,
) -> Result<Vec<f64>> {
    check_eps(eps)?;
    if j_at_y.len() != j_at_pert.len() {
        return Err(Error::Shape {
            expected: j_at_y.len(),
            got: j_at_pert.len(),
            context: "jacobian column count",
        });
    }
    let w_res = weight.apply_ata(&(mu - y))?;
    let w_delta = weight.apply_ata(delta)?;
    j_at_y
        .iter()
        .zip(j_at_pert)
        .map(|(j0, j1)| {
            check_len(j0.len(), mu.len(), "jacobian column")?;
            check_len(j1.len(), mu.len(), "perturbed jacobian column")?;
            Ok(2.0 * j0.dot(&w_res) + 2.0 * sigma * sigma / eps * (j1 - j0).dot(&w_delta))
        })
        .collect()
}

/// Canonical-basis form of the gradient estimator. `eval(y)` returns the
/// estimate and its parameter Jacobian columns at `y`.
pub fn sugar_fd<F>(eval: F, y: &Vector, eps: f64, weight: &RiskWeight, sigma: f64) -> Result<Vec<f64>>
where
    F: Fn(&Vector) -> Result<(Vector, Vec<Vector>)>,
{
    check_eps(eps)?;
    let p = y.len();
    if p > FD_MAX_DIM {
        return Err(Error::config("sugar_fd is limited to small P; use sugar_fdmc"));
    }
    let (mu, j0) = eval(y)?;
    let w_res = weight.apply_ata(&(&mu - y))?;
    let mut grad: Vec<f64> = j0.iter().map(|j| 2.0 * j.dot(&w_res)).collect();
    let mut yp = y.clone();
    let mut e = Vector::zeros(p);
    for i in 0..p {
        yp[i] += eps;
        let (_, j1) = eval(&yp)?;
        yp[i] = y[i];
        e[i] = 1.0;
        let we = weight.apply_ata(&e)?;
        e[i] = 0.0;
        for (c, g) in grad.iter_mut().enumerate() {
            *g += 2.0 * sigma * sigma / eps * (&j1[c] - &j0[c]).dot(&we);
        }
    }
    Ok(grad)
}

/// `eps = C sigma P^(-alpha)`.
pub fn epsilon_rule(sigma: f64, p: usize, c: f64, alpha: f64) -> Result<f64> {
    if !(sigma > 0.0) || p == 0 || !(c > 0.0) || !(alpha >= 0.0) {
        return Err(Error::config(format!(
            "epsilon rule needs sigma > 0, P >= 1, C > 0, alpha >= 0 (got {sigma}, {p}, {c}, {alpha})"
        )));
    }
    Ok(c * sigma * (p as f64).powf(-alpha))
}
