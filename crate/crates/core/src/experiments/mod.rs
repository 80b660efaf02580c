//! End-to-end pipelines: synthetic data, operator set-up, SUGAR-driven
//! tuning and plot-ready output.

mod config;
pub mod data;
mod pipelines;
mod st;

use std::path::Path;
use std::sync::{Arc, Mutex};

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autotune::{bfgs_minimize, multi_start, Evaluation, StopReason, TuneConfig, TuneResult, TuneTrace};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::oracles::{log_grid, replicate_rng};
use crate::prox::ParamVector;
use crate::risk::RiskReport;
use crate::solvers::{run_with_risk, RiskConfig, Scheme};

pub use config::{Experiment, ExperimentConfig, Sensing, Transform};
pub use pipelines::{
    build_denoise_st, build_matcomp, build_tv_deblur, build_wavelet_cs, jacobian_report, run_denoise_st, run_matcomp,
    run_oracle_suite, run_tv_deblur, run_wavelet_cs,
};
pub use st::{run_st_analytics, StAnalyticsOutput};

/// Name of the generator behind every random draw, recorded in outputs.
pub const RNG_NAME: &str = "ChaCha8 (one stream per purpose)";

/// Stream indices carved out of the run seed.
pub(crate) mod streams {
    pub const TRUTH: u64 = 0;
    pub const OPERATOR: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const PROBE: u64 = 3;
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    replicate_rng(seed, stream)
}

pub(crate) fn gaussian(n: usize, rng: &mut ChaCha8Rng) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// How the quality of an estimate is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    RelativeError,
    Psnr,
}

impl Quality {
    pub fn eval(self, x: &Vector, x0: &Vector) -> f64 {
        match self {
            Quality::RelativeError => data::relative_error(x, x0),
            Quality::Psnr => data::psnr(x, x0),
        }
    }
}

/// A solver, an observation and everything needed to evaluate the risk
/// surrogate and its gradient at any parameter.
pub struct TuningProblem {
    pub scheme: Arc<dyn Scheme>,
    pub y: Vector,
    pub x0: Vector,
    pub x_ls: Vector,
    pub risk: RiskConfig,
    pub lambda0: ParamVector,
    /// Shape of the estimate for CSV output.
    pub shape: (usize, usize),
    pub quality: Quality,
}

/// One row of the exhaustive-search table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCurveRow {
    /// Multiple of the initial parameter.
    pub scale: f64,
    pub theta: Vec<f64>,
    pub sure: f64,
    /// `||A Phi (x - x0)||^2`, the quantity the surrogate estimates.
    pub true_loss: f64,
    pub quality: f64,
}

/// Parameter, surrogate value and gradient for every tuner evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub theta: Vec<f64>,
    pub report: RiskReport,
}

impl TuningProblem {
    pub fn evaluate(&self, theta: &[f64], gradient: bool) -> Result<(Vector, RiskReport)> {
        let cfg = RiskConfig {
            gradient,
            ..self.risk.clone()
        };
        run_with_risk(self.scheme.as_ref(), &self.y, &ParamVector::new(theta.to_vec())?, &cfg)
    }

    pub fn surrogate(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.evaluate(theta, false)?.1.sure_value)
    }

    pub fn true_loss(&self, x: &Vector) -> Result<f64> {
        let phi = self.scheme.phi();
        self.risk.weight.weighted_sq_norm(&(phi.apply(x) - phi.apply(&self.x0)))
    }

    pub fn quality_of(&self, x: &Vector) -> f64 {
        self.quality.eval(x, &self.x0)
    }

    /// `theta -> (SURE, SUGAR)` with every report appended to `log`.
    pub fn objective<'a>(
        &'a self,
        log: &'a Mutex<Vec<ReportEntry>>,
    ) -> impl Fn(&[f64]) -> Result<Evaluation> + Sync + 'a {
        move |theta: &[f64]| {
            let (_, report) = self.evaluate(theta, true)?;
            let gradient = report
                .sugar_gradient
                .clone()
                .ok_or_else(|| Error::config("gradient tuning needs the FDMC estimator"))?;
            let value = report.sure_value;
            log.lock().expect("report log").push(ReportEntry {
                theta: theta.to_vec(),
                report,
            });
            Ok(Evaluation { value, gradient })
        }
    }

    /// BFGS from `lambda0`, or the best of three starts when `multi`.
    pub fn tune(&self, cfg: &TuneConfig, multi: bool) -> Result<(TuneResult, Vec<ReportEntry>)> {
        let log = Mutex::new(Vec::new());
        let res = if multi {
            let runs = multi_start(self.objective(&log), &self.lambda0, cfg)?;
            runs.into_iter()
                .min_by(|a, b| a.value.total_cmp(&b.value))
                .expect("three starts")
        } else {
            bfgs_minimize(self.objective(&log), &self.lambda0, cfg)?
        };
        let mut reports = log.into_inner().expect("report log");
        if multi {
            // Concurrent starts append in scheduling order.
            reports.sort_by(|a, b| a.theta.partial_cmp(&b.theta).unwrap_or(std::cmp::Ordering::Equal));
        }
        Ok((res, reports))
    }

    /// Surrogate, true loss and quality along `scale * lambda0` for a
    /// log-spaced set of scales.
    pub fn risk_curve(&self, lo: f64, hi: f64, points: usize) -> Result<Vec<RiskCurveRow>> {
        log_grid(lo, hi, points)
            .into_par_iter()
            .map(|s| {
                let theta: Vec<f64> = self.lambda0.values().iter().map(|v| v * s).collect();
                let (x, report) = self.evaluate(&theta, false)?;
                Ok(RiskCurveRow {
                    scale: s,
                    sure: report.sure_value,
                    true_loss: self.true_loss(&x)?,
                    quality: self.quality_of(&x),
                    theta,
                })
            })
            .collect()
    }
}

/// One line of the neighbourhood comparison around a tuned parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub dim_lambda: usize,
    pub factor: f64,
    pub theta: Vec<f64>,
    pub sure: f64,
    pub quality: f64,
}

/// Machine-readable summary of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: Experiment,
    pub seed: u64,
    pub rng: String,
    pub config: ExperimentConfig,
    pub observation_dim: usize,
    pub sigma: f64,
    pub epsilon: f64,
    pub lambda0: Vec<f64>,
    pub theta_star: Vec<f64>,
    pub sure_at_star: f64,
    pub oracle_risk: f64,
    pub quality_metric: Quality,
    pub quality: f64,
    pub baseline_quality: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    pub evaluations: usize,
    pub stop: StopReason,
    pub warning: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub comparison: Vec<ComparisonRow>,
    pub trace_file: String,
    pub runtime_secs: f64,
}

/// Everything a pipeline produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub record: ResultRecord,
    pub trace: TuneTrace,
    pub reports: Vec<ReportEntry>,
    pub risk_curve: Vec<RiskCurveRow>,
    pub estimate: Vector,
    pub shape: (usize, usize),
}

impl PipelineOutput {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("result.json"), serde_json::to_string_pretty(&self.record)?)?;
        self.trace.write_csv(std::fs::File::create(dir.join("trace.csv"))?)?;
        write_risk_curve(&dir.join("risk_curve.csv"), &self.risk_curve)?;
        write_reports(&dir.join("risk_reports.csv"), &self.reports)?;
        data::write_matrix_csv(
            std::fs::File::create(dir.join("estimate.csv"))?,
            self.shape.0,
            self.shape.1,
            self.estimate.as_slice(),
        )?;
        Ok(())
    }
}

fn write_risk_curve(path: &Path, rows: &[RiskCurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let dim = rows.first().map_or(0, |r| r.theta.len());
    let mut header = vec!["scale".to_string()];
    header.extend((0..dim).map(|k| format!("theta_{k}")));
    header.extend(["sure", "true_loss", "quality"].map(String::from));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![format!("{:e}", r.scale)];
        rec.extend(r.theta.iter().map(|t| format!("{t:e}")));
        rec.extend([r.sure, r.true_loss, r.quality].map(|v| format!("{v:e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_reports(path: &Path, rows: &[ReportEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let dim = rows.first().map_or(0, |r| r.theta.len());
    let mut header: Vec<String> = (0..dim).map(|k| format!("theta_{k}")).collect();
    header.extend(["sure", "dof", "epsilon", "solver_passes"].map(String::from));
    header.extend((0..dim).map(|k| format!("sugar_{k}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec: Vec<String> = r.theta.iter().map(|t| format!("{t:e}")).collect();
        rec.push(format!("{:e}", r.report.sure_value));
        rec.push(format!("{:e}", r.report.dof_estimate));
        rec.push(r.report.epsilon.map_or(String::new(), |e| format!("{e:e}")));
        rec.push(r.report.solver_passes.to_string());
        let g = r.report.sugar_gradient.clone().unwrap_or_default();
        rec.extend((0..dim).map(|k| g.get(k).map_or(String::new(), |v| format!("{v:e}"))));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Tunes `problem`, evaluates the result and fills the common record fields.
pub(crate) fn tune_and_record(
    problem: &TuningProblem,
    config: &ExperimentConfig,
    sigma: f64,
    started: std::time::Instant,
) -> Result<(PipelineOutput, Vector)> {
    let (res, reports) = problem.tune(&config.tune_config(), config.multi_start)?;
    let (x, report) = problem.evaluate(&res.theta, false)?;
    let risk_curve = problem.risk_curve(config.grid_lo, config.grid_hi, config.grid_points)?;
    let record = ResultRecord {
        experiment: config.experiment,
        seed: config.seed,
        rng: RNG_NAME.to_string(),
        config: config.clone(),
        observation_dim: problem.y.len(),
        sigma,
        epsilon: problem.risk.epsilon,
        lambda0: problem.lambda0.values().to_vec(),
        theta_star: res.theta.clone(),
        sure_at_star: report.sure_value,
        oracle_risk: problem.true_loss(&x)?,
        quality_metric: problem.quality,
        quality: problem.quality_of(&x),
        baseline_quality: problem.quality_of(&problem.x_ls),
        rank: None,
        evaluations: res.trace.evaluations(),
        stop: res.trace.stop,
        warning: res.trace.warning,
        comparison: Vec::new(),
        trace_file: "trace.csv".into(),
        runtime_secs: started.elapsed().as_secs_f64(),
    };
    Ok((
        PipelineOutput {
            record,
            trace: res.trace,
            reports,
            risk_curve,
            estimate: x.clone(),
            shape: problem.shape,
        },
        x,
    ))
}
