//! Quasi-Newton tuning of the regularization weights on the SURE surrogate.

use std::io::Write;

use log::{debug, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::prox::ParamVector;

/// Surrogate value and its gradient at one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub alpha_init: f64,
    pub stop_ratio: f64,
    pub max_outer_iters: usize,
    /// Total rejected line-search trials tolerated over a run.
    pub max_line_search_failures: usize,
    /// Hard cap on objective evaluations.
    pub max_evaluations: usize,
    pub c1: f64,
    pub c2: f64,
    /// Stop once a step moves every weight by less than this fraction.
    pub step_tol: f64,
    /// Largest factor by which one step may grow a weight.
    pub max_growth: f64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            alpha_init: 0.9,
            stop_ratio: 0.02,
            max_outer_iters: 50,
            max_line_search_failures: 30,
            max_evaluations: 200,
            c1: 1e-4,
            c2: 0.9,
            step_tol: 3e-2,
            max_growth: 4.0,
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_init > 0.0 && self.alpha_init < 1.0) {
            return Err(Error::config(format!(
                "alpha_init must lie in (0, 1), got {}",
                self.alpha_init
            )));
        }
        if !(self.stop_ratio > 0.0 && self.stop_ratio < 1.0) {
            return Err(Error::config(format!(
                "stop_ratio must lie in (0, 1), got {}",
                self.stop_ratio
            )));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::config("line search needs 0 < c1 < c2 < 1"));
        }
        if !(self.step_tol >= 0.0) {
            return Err(Error::config(format!(
                "step_tol must be nonnegative, got {}",
                self.step_tol
            )));
        }
        if !(self.max_growth > 1.0) {
            return Err(Error::config(format!(
                "max_growth must exceed 1, got {}",
                self.max_growth
            )));
        }
        if self.max_evaluations == 0 {
            return Err(Error::config("max_evaluations must be positive"));
        }
        Ok(())
    }
}

/// One objective evaluation made during tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub evaluation: usize,
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub grad_inf: f64,
    /// Whether the point became the next iterate.
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    /// Steps shrank below `step_tol` relative to the weights.
    StepTolerance,
    ZeroGradient,
    LineSearchFailures,
    MaxIterations,
    MaxEvaluations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneTrace {
    pub rows: Vec<TraceRow>,
    pub stop: StopReason,
    /// Set when the run stopped without meeting the gradient or step criterion.
    pub warning: bool,
}

impl TuneTrace {
    pub fn evaluations(&self) -> usize {
        self.rows.len()
    }

    pub fn accepted(&self) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(|r| r.accepted)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let dim = self.rows.first().map_or(0, |r| r.theta.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["evaluation".to_string(), "iteration".to_string()];
        header.extend((0..dim).map(|k| format!("theta_{k}")));
        header.extend(["sure", "grad_inf", "accepted"].map(String::from));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.evaluation.to_string(), r.iteration.to_string()];
            rec.extend(r.theta.iter().map(|t| format!("{t:e}")));
            rec.push(format!("{:e}", r.value));
            rec.push(format!("{:e}", r.grad_inf));
            rec.push(r.accepted.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    /// Best point seen over all evaluations.
    pub theta: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub trace: TuneTrace,
}

/// `P sigma^2 / (4 sum_k R_k(x_LS))` replicated over every parameter.
pub fn lambda_init(p: usize, sigma: f64, regularizer_values: &[f64]) -> Result<ParamVector> {
    let total: f64 = regularizer_values.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::config(
            "regularizers vanish at the least-squares estimate, nothing to tune",
        ));
    }
    let lam = p as f64 * sigma * sigma / (4.0 * total);
    ParamVector::new(vec![lam; regularizer_values.len()])
}

/// Diagonal `|alpha lambda0_k / g_k|`. Zero gradient entries borrow the
/// largest finite sibling; `None` when the whole gradient vanishes.
pub fn b1_init(lambda0: &[f64], gradient0: &[f64], alpha: f64) -> Option<Vec<f64>> {
    let raw: Vec<f64> = lambda0
        .iter()
        .zip(gradient0)
        .map(|(l, g)| (alpha * l / g).abs())
        .collect();
    let fallback = raw.iter().copied().filter(|v| v.is_finite()).fold(f64::NAN, f64::max);
    if fallback.is_nan() {
        return None;
    }
    Some(
        raw.into_iter()
            .map(|v| if v.is_finite() { v } else { fallback })
            .collect(),
    )
}

struct Run<'a, F> {
    objective: &'a F,
    config: &'a TuneConfig,
    rows: Vec<TraceRow>,
    best: Option<(Vec<f64>, Evaluation)>,
}

impl<F> Run<'_, F>
where
    F: Fn(&[f64]) -> Result<Evaluation>,
{
    fn eval(&mut self, theta: &[f64], iteration: usize) -> Result<Evaluation> {
        let e = (self.objective)(theta)?;
        if e.gradient.len() != theta.len() {
            return Err(Error::Shape {
                expected: theta.len(),
                got: e.gradient.len(),
                context: "objective gradient",
            });
        }
        if !e.value.is_finite() || e.gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::numerical(format!("objective not finite at {theta:?}")));
        }
        debug!("eval {} at {:?}: {:e}", self.rows.len(), theta, e.value);
        self.rows.push(TraceRow {
            evaluation: self.rows.len(),
            iteration,
            theta: theta.to_vec(),
            value: e.value,
            gradient: e.gradient.clone(),
            grad_inf: inf_norm(&e.gradient),
            accepted: false,
        });
        if self.best.as_ref().is_none_or(|(_, b)| e.value < b.value) {
            self.best = Some((theta.to_vec(), e.clone()));
        }
        Ok(e)
    }

    fn budget_left(&self) -> bool {
        self.rows.len() < self.config.max_evaluations
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, g| m.max(g.abs()))
}

/// Largest relative change `|t d_i| / x_i`.
fn relative_step(x: &[f64], d: &[f64], t: f64) -> f64 {
    x.iter().zip(d).fold(0.0, |m, (xi, di)| m.max((t * di / xi).abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Step multiplier while the curvature condition keeps failing.
const EXPAND: f64 = 4.0;

/// BFGS on the inverse Hessian with a weak-Wolfe line search. Trial points
/// leaving the positive orthant are rejected by halving the step.
pub fn bfgs_minimize<F>(objective: F, lambda0: &ParamVector, config: &TuneConfig) -> Result<TuneResult>
where
    F: Fn(&[f64]) -> Result<Evaluation>,
{
    config.validate()?;
    let n = lambda0.len();
    let mut run = Run {
        objective: &objective,
        config,
        rows: Vec::new(),
        best: None,
    };
    let mut x = lambda0.values().to_vec();
    let mut cur = run.eval(&x, 0)?;
    run.rows[0].accepted = true;
    let g0_inf = inf_norm(&cur.gradient);
    let mut failures = 0usize;

    let stop = 'outer: {
        let Some(diag) = b1_init(&x, &cur.gradient, config.alpha_init) else {
            break 'outer StopReason::ZeroGradient;
        };
        let mut h = DMatrix::from_diagonal(&Vector::from_vec(diag));
        for iter in 1..=config.max_outer_iters {
            if inf_norm(&cur.gradient) <= config.stop_ratio * g0_inf {
                break 'outer StopReason::Converged;
            }
            let g = Vector::from_column_slice(&cur.gradient);
            let mut d = -(&h * &g);
            let mut slope = d.dot(&g);
            if !(slope < 0.0) {
                // Lost descent: restart from the scaled diagonal.
                let diag = b1_init(&x, &cur.gradient, config.alpha_init).expect("nonzero gradient");
                h = DMatrix::from_diagonal(&Vector::from_vec(diag));
                d = -(&h * &g);
                slope = d.dot(&g);
            }
            let d = d.as_slice().to_vec();

            let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
            let growth = x.iter().zip(&d).fold(0.0f64, |m, (xi, di)| m.max(di / xi));
            let mut t = if growth > config.max_growth - 1.0 {
                (config.max_growth - 1.0) / growth
            } else {
                1.0
            };
            let mut armijo_point: Option<(f64, Vec<f64>, Evaluation)> = None;
            let mut stalled = false;
            let accepted = loop {
                if failures >= config.max_line_search_failures {
                    break None;
                }
                if relative_step(&x, &d, t) < config.step_tol {
                    stalled = true;
                    break None;
                }
                if !run.budget_left() {
                    break 'outer StopReason::MaxEvaluations;
                }
                let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
                if trial.iter().any(|v| !(*v > 0.0)) {
                    failures += 1;
                    hi = t;
                    t *= 0.5;
                    continue;
                }
                let e = run.eval(&trial, iter)?;
                let gd = dot(&e.gradient, &d);
                if e.value > cur.value + config.c1 * t * slope {
                    hi = t;
                } else if gd < config.c2 * slope {
                    if armijo_point.as_ref().is_none_or(|(_, _, b)| e.value < b.value) {
                        armijo_point = Some((t, trial.clone(), e.clone()));
                    }
                    lo = t;
                } else {
                    break Some((t, trial, e));
                }
                failures += 1;
                t = if hi.is_finite() { 0.5 * (lo + hi) } else { EXPAND * lo };
                if hi.is_finite() && (hi - lo) < 1e-12 * hi {
                    break None;
                }
            };
            let Some((t, next, e)) = accepted.or(armijo_point) else {
                break 'outer if stalled {
                    StopReason::StepTolerance
                } else {
                    StopReason::LineSearchFailures
                };
            };
            stalled |= relative_step(&x, &d, t) < config.step_tol;
            let last = run.rows.iter().rposition(|r| r.theta == next).expect("evaluated");
            run.rows[last].accepted = true;

            let s = Vector::from_iterator(n, next.iter().zip(&x).map(|(a, b)| a - b));
            let yv = Vector::from_iterator(n, e.gradient.iter().zip(&cur.gradient).map(|(a, b)| a - b));
            let sy = s.dot(&yv);
            if sy > 1e-300 {
                let rho = 1.0 / sy;
                let eye = DMatrix::<f64>::identity(n, n);
                let left = &eye - rho * &s * yv.transpose();
                let right = &eye - rho * &yv * s.transpose();
                h = left * h * right + rho * &s * s.transpose();
            }
            x = next;
            cur = e;
            if stalled {
                break 'outer StopReason::StepTolerance;
            }
        }
        if inf_norm(&cur.gradient) <= config.stop_ratio * g0_inf {
            StopReason::Converged
        } else {
            StopReason::MaxIterations
        }
    };

    let warning = !matches!(
        stop,
        StopReason::Converged | StopReason::StepTolerance | StopReason::ZeroGradient
    );
    if warning {
        warn!("tuning stopped early ({stop:?}); returning best point seen");
    }
    let (theta, best) = run.best.expect("at least one evaluation");
    Ok(TuneResult {
        theta,
        value: best.value,
        gradient: best.gradient,
        trace: TuneTrace {
            rows: run.rows,
            stop,
            warning,
        },
    })
}

/// Independent runs from `lambda0 * {1/4, 1, 4}`, in that order.
pub fn multi_start<F>(objective: F, lambda0: &ParamVector, config: &TuneConfig) -> Result<Vec<TuneResult>>
where
    F: Fn(&[f64]) -> Result<Evaluation> + Sync,
{
    [0.25, 1.0, 4.0]
        .par_iter()
        .map(|&s| {
            let start = ParamVector::new(lambda0.values().iter().map(|v| v * s).collect())?;
            bfgs_minimize(&objective, &start, config)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_init_ratio() {
        let l = lambda_init(100, 1.0, &[10.0, 15.0]).unwrap();
        assert_eq!(l.values(), &[1.0, 1.0]);
        let l2 = lambda_init(100, 2.0, &[25.0]).unwrap();
        assert_eq!(l2.values(), &[4.0]);
        assert!(lambda_init(10, 1.0, &[0.0]).is_err());
    }

    #[test]
    fn b1_first_step() {
        let b = b1_init(&[2.0], &[4.0], 0.9).unwrap();
        assert!((b[0] - 0.45).abs() < 1e-15);
        assert!((2.0 - b[0] * 4.0 - 0.2).abs() < 1e-12);
        let b = b1_init(&[2.0], &[-4.0], 0.9).unwrap();
        assert!((2.0 + b[0] * 4.0 - 3.8).abs() < 1e-12);
    }

    #[test]
    fn b1_mixed_signs_and_zeros() {
        let l = [1.0, 2.0, 3.0];
        let g = [0.5, -3.0, 7.0];
        let b = b1_init(&l, &g, 0.5).unwrap();
        for k in 0..3 {
            let step = -b[k] * g[k];
            assert!((step.abs() - 0.5 * l[k]).abs() < 1e-12);
        }
        let b = b1_init(&[1.0, 1.0], &[0.0, 2.0], 0.9).unwrap();
        assert_eq!(b[0], b[1]);
        assert!(b1_init(&[1.0], &[0.0], 0.9).is_none());
    }

    fn shrinkage_objective(y: &[f64], sigma: f64) -> impl Fn(&[f64]) -> Result<Evaluation> + '_ {
        let p = y.len() as f64;
        let yy: f64 = y.iter().map(|v| v * v).sum();
        move |theta| {
            let l = theta[0];
            let value = yy * (l / (1.0 + l)).powi(2) - p * sigma * sigma + 2.0 * sigma * sigma * p / (1.0 + l);
            let grad = 2.0 * yy * l / (1.0 + l).powi(3) - 2.0 * sigma * sigma * p / (1.0 + l).powi(2);
            Ok(Evaluation {
                value,
                gradient: vec![grad],
            })
        }
    }

    #[test]
    fn linear_shrinkage_reaches_analytic_minimizer() {
        let y: Vec<f64> = (0..64).map(|i| 0.3 + (i as f64 * 0.71).sin()).collect();
        let sigma = 0.5;
        let p = y.len() as f64;
        let yy: f64 = y.iter().map(|v| v * v).sum();
        let c = 1.0 - sigma * sigma * p / yy;
        let target = 1.0 / c - 1.0;
        let cfg = TuneConfig {
            stop_ratio: 1e-9,
            step_tol: 0.0,
            ..TuneConfig::default()
        };
        let res = bfgs_minimize(shrinkage_objective(&y, sigma), &ParamVector::scalar(1.0).unwrap(), &cfg).unwrap();
        assert!((res.theta[0] - target).abs() < 1e-6, "{} vs {target}", res.theta[0]);
        assert!(res.trace.accepted().count() <= 11);
    }

    #[test]
    fn quadratic_in_two_parameters() {
        let a = [[3.0, 0.5], [0.5, 1.0]];
        let b = [1.0, 0.8];
        let f = |t: &[f64]| {
            let at = [a[0][0] * t[0] + a[0][1] * t[1], a[1][0] * t[0] + a[1][1] * t[1]];
            Ok(Evaluation {
                value: 0.5 * dot(t, &at) - dot(&b, t),
                gradient: vec![at[0] - b[0], at[1] - b[1]],
            })
        };
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let xs = [
            (a[1][1] * b[0] - a[0][1] * b[1]) / det,
            (a[0][0] * b[1] - a[1][0] * b[0]) / det,
        ];
        let cfg = TuneConfig {
            stop_ratio: 1e-12,
            step_tol: 0.0,
            ..TuneConfig::default()
        };
        let res = bfgs_minimize(f, &ParamVector::new(vec![1.0, 1.0]).unwrap(), &cfg).unwrap();
        assert!((res.theta[0] - xs[0]).abs() < 1e-8 && (res.theta[1] - xs[1]).abs() < 1e-8);
    }

    #[test]
    fn iterates_stay_positive_and_best_not_worse_than_start() {
        // Minimizer sits outside the orthant in the first coordinate.
        let f = |t: &[f64]| {
            Ok(Evaluation {
                value: (t[0] + 1.0).powi(2) + (t[1] - 2.0).powi(2),
                gradient: vec![2.0 * (t[0] + 1.0), 2.0 * (t[1] - 2.0)],
            })
        };
        let res = bfgs_minimize(f, &ParamVector::new(vec![1.0, 1.0]).unwrap(), &TuneConfig::default()).unwrap();
        assert!(res.trace.rows.iter().all(|r| r.theta.iter().all(|v| *v > 0.0)));
        assert!(res.value <= res.trace.rows[0].value);
    }

    #[test]
    fn stop_rule_matches_trace() {
        let y: Vec<f64> = (0..32).map(|i| 1.0 + (i as f64).cos()).collect();
        let res = bfgs_minimize(
            shrinkage_objective(&y, 0.6),
            &ParamVector::scalar(0.1).unwrap(),
            &TuneConfig::default(),
        )
        .unwrap();
        let acc: Vec<&TraceRow> = res.trace.accepted().collect();
        let g0 = acc[0].grad_inf;
        assert_eq!(res.trace.stop, StopReason::Converged);
        let last = acc.last().unwrap();
        assert!(last.grad_inf <= 0.02 * g0);
        for r in &acc[..acc.len() - 1] {
            assert!(r.grad_inf > 0.02 * g0);
        }
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let y: Vec<f64> = (0..16).map(|i| 1.0 + i as f64).collect();
        let res = bfgs_minimize(
            shrinkage_objective(&y, 1.0),
            &ParamVector::scalar(0.5).unwrap(),
            &TuneConfig::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        res.trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("evaluation,iteration,theta_0,sure,grad_inf,accepted"));
        assert_eq!(text.lines().count(), res.trace.rows.len() + 1);
    }

    #[test]
    fn growth_cap_and_step_tolerance() {
        // Flat far to the right: an unguarded step would jump by orders of magnitude.
        let f = |t: &[f64]| {
            Ok(Evaluation {
                value: -(t[0] / (1.0 + 0.01 * t[0])),
                gradient: vec![-1.0 / (1.0 + 0.01 * t[0]).powi(2)],
            })
        };
        let cfg = TuneConfig {
            max_evaluations: 40,
            ..TuneConfig::default()
        };
        let res = bfgs_minimize(f, &ParamVector::scalar(1.0).unwrap(), &cfg).unwrap();
        for w in res.trace.rows.windows(2) {
            assert!(w[1].theta[0] <= 4.0 * w[0].theta[0] + 1e-12);
        }

        let rough = |t: &[f64]| {
            let g = 2.0 * (t[0] - 3.0) + 0.4 * (t[0] * 1e3).sin();
            Ok(Evaluation {
                value: (t[0] - 3.0).powi(2),
                gradient: vec![g],
            })
        };
        let cfg = TuneConfig {
            stop_ratio: 1e-12,
            ..TuneConfig::default()
        };
        let res = bfgs_minimize(rough, &ParamVector::scalar(1.0).unwrap(), &cfg).unwrap();
        assert_eq!(res.trace.stop, StopReason::StepTolerance);
        assert!(!res.trace.warning);
        assert!(res.trace.evaluations() < 30);
        assert!((res.theta[0] - 3.0).abs() < 0.3);
    }
}
