use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Scheme, SolveOutput};
use crate::error::{check_len, Result};
use crate::linalg::Vector;
use crate::operators::RiskWeight;
use crate::prox::ParamVector;
use crate::risk::{dof_fdmc_from, dof_mc, sugar_fdmc, sure_value, RiskReport, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimator {
    /// Derivative along the probe propagated through the solver; one pass.
    #[serde(rename = "MC")]
    Mc,
    /// Finite difference along the probe; two passes, with the gradient.
    #[serde(rename = "FDMC")]
    Fdmc,
}

/// Probe, step and weighting shared by every evaluation of one tuning run.
#[derive(Debug, Clone)]
pub struct RiskConfig {
    pub estimator: Estimator,
    pub sigma: f64,
    pub epsilon: f64,
    pub delta: Vector,
    pub weight: Arc<RiskWeight>,
    /// Propagate `J_x` and return the gradient estimate (FDMC only).
    pub gradient: bool,
}

/// Solves at `y` (and at `y + eps delta` for FDMC) and returns the estimate
/// at `y` with its risk report.
pub fn run_with_risk(
    scheme: &dyn Scheme,
    y: &Vector,
    theta: &ParamVector,
    cfg: &RiskConfig,
) -> Result<(Vector, RiskReport)> {
    check_len(cfg.delta.len(), y.len(), "probe")?;
    let phi = scheme.phi();
    let sigma = cfg.sigma;
    match cfg.estimator {
        Estimator::Mc => {
            let out = scheme.solve(y, theta, Some(&cfg.delta), false)?;
            let mu = phi.apply(&out.x);
            let d_mu = phi.apply(out.dx.as_ref().expect("probe derivative requested"));
            let dof = dof_mc(&d_mu, &cfg.delta, &cfg.weight)?;
            let report = RiskReport {
                sure_value: sure_value(&mu, dof, y, &cfg.weight, sigma)?,
                dof_estimate: dof,
                sugar_gradient: None,
                epsilon: None,
                probe: Some(cfg.delta.as_slice().to_vec()),
                variant: Variant::Mc,
                solver_passes: 1,
            };
            Ok((out.x, report))
        }
        Estimator::Fdmc => {
            let y_pert = y + &cfg.delta * cfg.epsilon;
            let (a, b): (Result<SolveOutput>, Result<SolveOutput>) = rayon::join(
                || scheme.solve(y, theta, None, cfg.gradient),
                || scheme.solve(&y_pert, theta, None, cfg.gradient),
            );
            let (a, b) = (a?, b?);
            let mu = phi.apply(&a.x);
            let mu_pert = phi.apply(&b.x);
            let dof = dof_fdmc_from(&mu, &mu_pert, cfg.epsilon, &cfg.delta, &cfg.weight)?;
            let sugar = if cfg.gradient {
                let j0: Vec<Vector> = a.jx.iter().map(|j| phi.apply(j)).collect();
                let j1: Vec<Vector> = b.jx.iter().map(|j| phi.apply(j)).collect();
                Some(sugar_fdmc(
                    &j0,
                    &j1,
                    &mu,
                    y,
                    cfg.epsilon,
                    &cfg.delta,
                    &cfg.weight,
                    sigma,
                )?)
            } else {
                None
            };
            let report = RiskReport {
                sure_value: sure_value(&mu, dof, y, &cfg.weight, sigma)?,
                dof_estimate: dof,
                sugar_gradient: sugar,
                epsilon: Some(cfg.epsilon),
                probe: Some(cfg.delta.as_slice().to_vec()),
                variant: Variant::Fdmc,
                solver_passes: 2,
            };
            Ok((a.x, report))
        }
    }
}
