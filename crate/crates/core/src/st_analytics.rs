//! Closed-form statistics of the finite-difference SUGAR estimator for
//! soft-thresholding, and the bias/variance study built on them.
//!
//! Throughout, `y = mu0 + sigma * w` with `w` standard normal and the
//! estimator is `mu(y) = ST(y, lambda)`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc};

use crate::error::{Error, Result};
use crate::oracles::{replicate_rng, McEstimate};

/// Default threshold for the bias/variance study, in units of sigma.
pub const DEFAULT_LAMBDA: f64 = 2.0;
/// Default decay exponent of the compressible mean.
pub const DEFAULT_GAMMA: f64 = 0.5;
/// Default largest entry of the compressible mean, in units of sigma.
pub const DEFAULT_PEAK: f64 = 5.0;

/// One soft-thresholding configuration.
#[derive(Debug, Clone)]
pub struct STSetting {
    mu0: Vec<f64>,
    sigma: f64,
    lambda: f64,
    epsilon: f64,
}

impl STSetting {
    pub fn new(mu0: Vec<f64>, sigma: f64, lambda: f64, epsilon: f64) -> Result<Self> {
        if !(sigma > 0.0 && lambda > 0.0 && epsilon > 0.0) {
            return Err(Error::config("sigma, lambda and epsilon must be positive"));
        }
        if epsilon >= 2.0 * lambda {
            return Err(Error::config(format!(
                "finite difference step {epsilon} must be below 2*lambda = {}",
                2.0 * lambda
            )));
        }
        Ok(STSetting {
            mu0,
            sigma,
            lambda,
            epsilon,
        })
    }

    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// `erf(b) - erf(a)`, switching to erfc in the tails to keep precision.
fn erf_diff(a: f64, b: f64) -> f64 {
    if a > 0.0 && b > 0.0 {
        erfc(a) - erfc(b)
    } else if a < 0.0 && b < 0.0 {
        erfc(-b) - erfc(-a)
    } else {
        erf(b) - erf(a)
    }
}

/// The four-erf expression: twice the probability that `y_i` falls in
/// `(-lambda - eps, -lambda) U (lambda - eps, lambda)`.
pub fn phi_term(a: f64, sigma: f64, lambda: f64, eps: f64) -> f64 {
    let s = std::f64::consts::SQRT_2 * sigma;
    erf_diff((a + lambda) / s, (a + lambda + eps) / s) + erf_diff((a - lambda) / s, (a - lambda + eps) / s)
}

/// Expectation of the finite-difference DOF gradient.
pub fn st_dofgrad_mean(setting: &STSetting) -> f64 {
    let eps = setting.epsilon;
    -0.5 * setting
        .mu0
        .iter()
        .map(|&a| phi_term(a, setting.sigma, setting.lambda, eps) / eps)
        .sum::<f64>()
}

/// Variance of the finite-difference DOF gradient.
pub fn st_dofgrad_var(setting: &STSetting) -> f64 {
    let eps = setting.epsilon;
    setting
        .mu0
        .iter()
        .map(|&a| {
            let r = phi_term(a, setting.sigma, setting.lambda, eps) / eps;
            r / (2.0 * eps) - 0.25 * r * r
        })
        .sum()
}

/// Exact derivative of the DOF with respect to lambda.
pub fn st_dofgrad_true(mu0: &[f64], sigma: f64, lambda: f64) -> f64 {
    let s2 = 2.0 * sigma * sigma;
    let scale = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
    -scale
        * mu0
            .iter()
            .map(|&a| (-(a + lambda).powi(2) / s2).exp() + (-(a - lambda).powi(2) / s2).exp())
            .sum::<f64>()
}

/// `P(|Y| > lambda)` for `Y ~ N(a, sigma^2)`.
pub fn exceed_probability(a: f64, sigma: f64, lambda: f64) -> f64 {
    let s = std::f64::consts::SQRT_2 * sigma;
    0.5 * (erfc((lambda - a) / s) + erfc((lambda + a) / s))
}

/// Exact derivative of the risk `E||ST(Y) - mu0||^2` with respect to lambda.
pub fn st_risk_grad_true(mu0: &[f64], sigma: f64, lambda: f64) -> f64 {
    let exceed: f64 = mu0.iter().map(|&a| exceed_probability(a, sigma, lambda)).sum();
    2.0 * lambda * exceed + 2.0 * sigma * sigma * st_dofgrad_true(mu0, sigma, lambda)
}

/// Derivative of `ST(v, lambda)` in lambda.
fn st_lambda_jac(v: f64, lambda: f64) -> f64 {
    if v.abs() > lambda {
        -v.signum()
    } else {
        0.0
    }
}

/// Finite-difference DOF gradient for one realization `y`.
pub fn sampled_dofgrad_fd(y: &[f64], lambda: f64, eps: f64) -> f64 {
    y.iter()
        .map(|&v| (st_lambda_jac(v + eps, lambda) - st_lambda_jac(v, lambda)) / eps)
        .sum()
}

/// SUGAR of the finite-difference SURE for soft-thresholding.
pub fn st_sugar(y: &[f64], sigma: f64, lambda: f64, eps: f64) -> f64 {
    let active = y.iter().filter(|v| v.abs() > lambda).count() as f64;
    2.0 * lambda * active + 2.0 * sigma * sigma * sampled_dofgrad_fd(y, lambda, eps)
}

/// Compressible mean `c * sigma * i^(-1/gamma)` with alternating signs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mu0Model {
    pub gamma: f64,
    /// Largest magnitude, in units of sigma.
    pub peak: f64,
}

impl Default for Mu0Model {
    fn default() -> Self {
        Mu0Model {
            gamma: DEFAULT_GAMMA,
            peak: DEFAULT_PEAK,
        }
    }
}

impl Mu0Model {
    pub fn generate(&self, p: usize, sigma: f64) -> Vec<f64> {
        (1..=p)
            .map(|i| {
                let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
                sign * self.peak * sigma * (i as f64).powf(-1.0 / self.gamma)
            })
            .collect()
    }
}

/// Step rule `eps(P) = c * sigma * P^(-alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsRule {
    pub c: f64,
    pub alpha: f64,
}

impl EpsRule {
    pub fn eval(&self, sigma: f64, p: usize) -> f64 {
        self.c * sigma * (p as f64).powf(-self.alpha)
    }
}

/// One cell of the MSE surface, normalized by `P^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseCell {
    pub p: usize,
    pub epsilon: f64,
    pub bias2: f64,
    pub variance: f64,
    pub mse: f64,
}

fn mse_cell(mu0: &[f64], sigma: f64, lambda: f64, eps: f64) -> Result<MseCell> {
    let setting = STSetting::new(mu0.to_vec(), sigma, lambda, eps)?;
    let p = mu0.len();
    let norm = (p * p) as f64;
    let bias = st_dofgrad_mean(&setting) - st_dofgrad_true(mu0, sigma, lambda);
    let bias2 = bias * bias / norm;
    let variance = st_dofgrad_var(&setting) / norm;
    Ok(MseCell {
        p,
        epsilon: eps,
        bias2,
        variance,
        mse: bias2 + variance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseSurface {
    pub cells: Vec<MseCell>,
    /// Minimizing cell for each P.
    pub argmin: Vec<MseCell>,
}

/// Normalized bias, variance and MSE over a grid of dimensions and steps.
pub fn st_mse_surface(model: &Mu0Model, sigma: f64, lambda: f64, ps: &[usize], epsilons: &[f64]) -> Result<MseSurface> {
    let mut cells = Vec::with_capacity(ps.len() * epsilons.len());
    let mut argmin = Vec::with_capacity(ps.len());
    for &p in ps {
        let mu0 = model.generate(p, sigma);
        let row = epsilons
            .par_iter()
            .map(|&e| mse_cell(&mu0, sigma, lambda, e))
            .collect::<Result<Vec<_>>>()?;
        let best = row
            .iter()
            .copied()
            .min_by(|a, b| a.mse.total_cmp(&b.mse))
            .ok_or_else(|| Error::config("empty step grid"))?;
        argmin.push(best);
        cells.extend(row);
    }
    Ok(MseSurface { cells, argmin })
}

/// MSE along a step rule as P grows.
pub fn st_rule_curve(model: &Mu0Model, sigma: f64, lambda: f64, rule: EpsRule, ps: &[usize]) -> Result<Vec<MseCell>> {
    ps.par_iter()
        .map(|&p| mse_cell(&model.generate(p, sigma), sigma, lambda, rule.eval(sigma, p)))
        .collect()
}

/// Spread of `(SUGAR - true gradient) / P` at one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub p: usize,
    pub epsilon: f64,
    pub true_gradient: f64,
    pub error: McEstimate,
    /// Root mean square of the normalized error.
    pub rms: f64,
}

/// Monte-Carlo study of the normalized SUGAR error as P grows.
pub fn st_sugar_consistency_experiment<R>(
    model: &Mu0Model,
    sigma: f64,
    lambda: f64,
    rule: R,
    ps: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<Vec<ConsistencyRow>>
where
    R: Fn(usize) -> f64,
{
    if replicates < 2 {
        return Err(Error::config("need at least two replicates"));
    }
    let mut rows = Vec::with_capacity(ps.len());
    for (k, &p) in ps.iter().enumerate() {
        let eps = rule(p);
        STSetting::new(Vec::new(), sigma, lambda, eps)?;
        let mu0 = model.generate(p, sigma);
        let truth = st_risk_grad_true(&mu0, sigma, lambda);
        let errors: Vec<f64> = (0..replicates)
            .into_par_iter()
            .map(|i| {
                let mut rng = replicate_rng(seed, (k * replicates + i) as u64);
                let y = loop {
                    let y: Vec<f64> = mu0
                        .iter()
                        .map(|&a| a + sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                        .collect();
                    // Resample if some entry sits on a kink of the estimator.
                    if y.iter().all(|v| v.abs() != lambda && (v + eps).abs() != lambda) {
                        break y;
                    }
                };
                (st_sugar(&y, sigma, lambda, eps) - truth) / p as f64
            })
            .collect();
        let rms = (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt();
        rows.push(ConsistencyRow {
            p,
            epsilon: eps,
            true_gradient: truth,
            error: McEstimate::from_samples(&errors),
            rms,
        });
    }
    Ok(rows)
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(eps: f64) -> STSetting {
        STSetting::new(vec![0.0], 1.0, 1.0, eps).unwrap()
    }

    #[test]
    fn rejects_large_step() {
        assert!(STSetting::new(vec![0.0], 1.0, 1.0, 2.0).is_err());
        assert!(STSetting::new(vec![0.0], 1.0, 1.0, 1.99).is_ok());
    }

    #[test]
    fn mean_at_reference_point() {
        assert!((st_dofgrad_mean(&unit(0.5)) - (-0.483_460_674_9)).abs() < 1e-9);
    }

    #[test]
    fn true_gradient_at_reference_point() {
        let expected = -2.0 * (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((st_dofgrad_true(&[0.0], 1.0, 1.0) - expected).abs() < 1e-15);
        assert!((expected - (-0.483_941_449_0)).abs() < 1e-9);
    }

    #[test]
    fn mean_tends_to_true_gradient() {
        let mu0 = vec![0.3, -1.2, 2.5, 0.0];
        let s = STSetting::new(mu0.clone(), 1.0, 1.0, 1e-6).unwrap();
        assert!((st_dofgrad_mean(&s) - st_dofgrad_true(&mu0, 1.0, 1.0)).abs() < 1e-6);
    }

    #[test]
    fn dead_zone_limits() {
        let s = STSetting::new(vec![0.0, 1.0], 1.0, 60.0, 0.5).unwrap();
        assert_eq!(st_dofgrad_mean(&s), 0.0);
        assert_eq!(st_dofgrad_var(&s), 0.0);
        assert!(st_dofgrad_true(&[0.0], 1.0, 60.0).abs() < 1e-300);
    }

    #[test]
    fn true_gradient_even_in_mean() {
        let a = [0.4, -2.0, 1.1];
        let b = [-0.4, 2.0, -1.1];
        assert_eq!(st_dofgrad_true(&a, 1.3, 0.7), st_dofgrad_true(&b, 1.3, 0.7));
    }

    #[test]
    fn variance_grows_like_inverse_step() {
        let v1 = st_dofgrad_var(&unit(1e-4));
        let v2 = st_dofgrad_var(&unit(5e-5));
        assert!((v2 / v1 - 2.0).abs() < 1e-3);
    }

    #[test]
    fn bias_column_is_consistent() {
        let model = Mu0Model::default();
        let surf = st_mse_surface(&model, 1.0, 2.0, &[50], &[0.1, 0.5]).unwrap();
        let mu0 = model.generate(50, 1.0);
        for c in &surf.cells {
            let s = STSetting::new(mu0.clone(), 1.0, 2.0, c.epsilon).unwrap();
            let b = st_dofgrad_mean(&s) - st_dofgrad_true(&mu0, 1.0, 2.0);
            assert_eq!(c.bias2, b * b / 2500.0);
        }
    }

    #[test]
    fn bias_vanishes_variance_grows_as_step_shrinks() {
        let model = Mu0Model::default();
        let surf = st_mse_surface(&model, 1.0, 2.0, &[1000], &[1.0, 0.1, 0.01]).unwrap();
        let c = &surf.cells;
        assert!(c[0].bias2 > c[1].bias2 && c[1].bias2 > c[2].bias2);
        assert!(c[0].variance < c[1].variance && c[1].variance < c[2].variance);
    }

    #[test]
    fn exceed_probability_matches_direct_sum() {
        let p = exceed_probability(0.3, 1.0, 1.0);
        let direct = 1.0 - 0.5 * (erf(0.7 / std::f64::consts::SQRT_2) + erf(1.3 / std::f64::consts::SQRT_2));
        assert!((p - direct).abs() < 1e-15);
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 4.0, 9.0, 16.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sugar_mean_close_to_truth_at_small_step() {
        let model = Mu0Model::default();
        let rows = st_sugar_consistency_experiment(&model, 1.0, 2.0, |_| 0.1, &[512], 400, 11).unwrap();
        let r = rows[0];
        assert!(r.error.within(0.0, 3.0), "z = {}", r.error.z_score(0.0));
    }
}
