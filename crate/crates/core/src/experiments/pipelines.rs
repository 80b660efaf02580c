use std::sync::Arc;
use std::time::Instant;

use log::info;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::data::{cartoon_image, read_pgm};
use super::{
    gaussian, rng_for, streams, tune_and_record, ComparisonRow, Experiment, ExperimentConfig, PipelineOutput, Quality,
    Sensing, Transform, TuningProblem,
};
use crate::autotune::lambda_init;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::operators::{
    gaussian_kernel, least_squares, lowpass_frequency_mask, make_discrete_gradient, make_mask,
    make_periodic_convolution, make_random_sensing, make_risk_weight, make_undecimated_wavelet, Identity, LinearMap,
};
use crate::oracles::{fd_jacobian_oracle, mc_expectation_oracle, OracleReport};
use crate::prox::{BlockL12Penalty, L1Penalty, NuclearPenalty, ParamLayout, ParamVector, Penalty, TvConstraint};
use crate::risk::{dof_mc, epsilon_rule};
use crate::solvers::{CpScheme, GfbScheme, RiskConfig, Scheme, SolverConfig};
use crate::st_analytics::Mu0Model;

fn risk_config(config: &ExperimentConfig, phi: Arc<dyn LinearMap>, sigma: f64) -> Result<RiskConfig> {
    let p = phi.out_dim();
    let weight = Arc::new(make_risk_weight(config.risk_mode, phi)?);
    let delta = gaussian(p, &mut rng_for(config.seed, streams::PROBE));
    Ok(RiskConfig {
        estimator: config.estimator,
        sigma,
        epsilon: epsilon_rule(sigma, p, config.eps_c, config.eps_alpha)?,
        delta,
        weight,
        gradient: true,
    })
}

fn observe(config: &ExperimentConfig, phi: &dyn LinearMap, x0: &Vector, sigma: f64) -> Vector {
    phi.apply(x0) + gaussian(phi.out_dim(), &mut rng_for(config.seed, streams::NOISE)) * sigma
}

fn random_orthonormal<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

/// Test image from `config.input` or the seeded cartoon generator.
fn load_image(config: &ExperimentConfig) -> Result<(usize, usize, Vector)> {
    match &config.input {
        Some(path) => read_pgm(path),
        None => {
            let img = cartoon_image(
                config.n1,
                config.n2,
                config.rects,
                &mut rng_for(config.seed, streams::TRUTH),
            );
            Ok((config.n1, config.n2, img))
        }
    }
}

/// Extra outputs of the matrix-completion set-up.
pub struct MatcompSetup {
    pub problem: TuningProblem,
    pub sigma: f64,
}

pub fn build_matcomp(config: &ExperimentConfig) -> Result<MatcompSetup> {
    let (n1, n2) = (config.n1, config.n2);
    let n = n1 * n2;
    let p = (config.observe_ratio * n as f64).round() as usize;
    if p == 0 || n1 < 2 || n2 < 2 {
        return Err(Error::config(format!(
            "matrix completion needs at least 2x2 entries and one observation ({n1}x{n2}, {p})"
        )));
    }
    let r = n1.min(n2);
    let mut truth_rng = rng_for(config.seed, streams::TRUTH);
    let v = random_orthonormal(n1, r, &mut truth_rng);
    let u = random_orthonormal(n2, r, &mut truth_rng);
    let spectrum = DMatrix::from_diagonal(&Vector::from_fn(r, |k, _| 1.0 / (k + 1) as f64));
    let x0m = v * spectrum * u.transpose();
    let x0 = Vector::from_iterator(n, (0..n).map(|idx| x0m[(idx / n2, idx % n2)]));

    let mut op_rng = rng_for(config.seed, streams::OPERATOR);
    let mut pattern = rand::seq::index::sample(&mut op_rng, n, p).into_vec();
    pattern.sort_unstable();
    let phi: Arc<dyn LinearMap> = Arc::new(make_mask(n, &pattern)?);

    let sigma = match config.sigma {
        Some(s) => s,
        None => {
            // Least squares then has relative error 0.9 on average.
            let missing = (&x0 - phi.adjoint(&phi.apply(&x0))).norm_squared();
            let s2 = (0.81 * x0.norm_squared() - missing) / p as f64;
            if !(s2 > 0.0) {
                return Err(Error::config(
                    "observation ratio too small to calibrate a least-squares error of 0.9",
                ));
            }
            s2.sqrt()
        }
    };
    let y = observe(config, phi.as_ref(), &x0, sigma);
    let x_ls = phi.adjoint(&y);
    let pen = NuclearPenalty { n1, n2 };
    let lambda0 = lambda_init(p, sigma, &[pen.regularizer_value(&x_ls)])?;
    let solver = SolverConfig::gfb(config.step.unwrap_or(1.0)).with_iters(config.iters);
    let penalties: Vec<Arc<dyn Penalty>> = vec![Arc::new(pen)];
    let scheme = Arc::new(GfbScheme::new(phi.clone(), &penalties, n, &solver)?);
    let risk = risk_config(config, phi, sigma)?;
    Ok(MatcompSetup {
        problem: TuningProblem {
            scheme,
            y,
            x0,
            x_ls,
            risk,
            lambda0,
            shape: (n1, n2),
            quality: Quality::RelativeError,
        },
        sigma,
    })
}

fn numerical_rank(x: &Vector, n1: usize, n2: usize) -> usize {
    let m = DMatrix::from_row_slice(n1, n2, x.as_slice());
    let sv = m.singular_values();
    let top = sv.max();
    sv.iter().filter(|&&s| s > 1e-9 * top.max(f64::MIN_POSITIVE)).count()
}

pub fn run_matcomp(config: &ExperimentConfig) -> Result<PipelineOutput> {
    let started = Instant::now();
    let setup = build_matcomp(config)?;
    let (mut out, x) = tune_and_record(&setup.problem, config, setup.sigma, started)?;
    out.record.rank = Some(numerical_rank(&x, config.n1, config.n2));
    out.record.runtime_secs = started.elapsed().as_secs_f64();
    info!(
        "matcomp: lambda* = {:?}, relative error {:.3} (least squares {:.3})",
        out.record.theta_star, out.record.quality, out.record.baseline_quality
    );
    Ok(out)
}

pub fn build_tv_deblur(config: &ExperimentConfig) -> Result<TuningProblem> {
    let (n1, n2, x0) = load_image(config)?;
    let n = n1 * n2;
    let sigma = config.sigma.unwrap_or(10.0);
    let kernel = gaussian_kernel(n1, n2, config.blur_std);
    let mask = lowpass_frequency_mask(n1, n2, config.keep_fraction);
    let phi: Arc<dyn LinearMap> = Arc::new(make_periodic_convolution(n1, n2, &kernel, &mask)?);
    let y = observe(config, phi.as_ref(), &x0, sigma);
    let x_ls = least_squares(phi.clone(), &y)?;

    let grad = Arc::new(make_discrete_gradient(n1, n2)?);
    let tv = BlockL12Penalty {
        prefix: n,
        groups: n,
        block_dim: 2,
    };
    let mut state = Vector::zeros(3 * n);
    state.rows_mut(0, n).copy_from(&x_ls);
    state.rows_mut(n, 2 * n).copy_from(&grad.apply(&x_ls));
    let lambda0 = lambda_init(phi.out_dim(), sigma, &[tv.regularizer_value(&state)])?;

    let lip = phi.norm_bound().powi(2);
    let solver = SolverConfig::gfb(config.step.unwrap_or(1.5 / lip)).with_iters(config.iters);
    let penalties: Vec<Arc<dyn Penalty>> = vec![Arc::new(tv), Arc::new(TvConstraint { grad })];
    let scheme = Arc::new(GfbScheme::new(phi.clone(), &penalties, 3 * n, &solver)?);
    let risk = risk_config(config, phi, sigma)?;
    Ok(TuningProblem {
        scheme,
        y,
        x0,
        x_ls,
        risk,
        lambda0,
        shape: (n1, n2),
        quality: Quality::Psnr,
    })
}

pub fn run_tv_deblur(config: &ExperimentConfig) -> Result<PipelineOutput> {
    let started = Instant::now();
    let problem = build_tv_deblur(config)?;
    let sigma = problem.risk.sigma;
    let (mut out, _) = tune_and_record(&problem, config, sigma, started)?;
    out.record.runtime_secs = started.elapsed().as_secs_f64();
    info!(
        "tv-deblur: lambda* = {:?}, PSNR {:.2} dB (least squares {:.2} dB)",
        out.record.theta_star, out.record.quality, out.record.baseline_quality
    );
    Ok(out)
}

/// `per_scale` selects one parameter per scale instead of a global one.
pub fn build_wavelet_cs(config: &ExperimentConfig, per_scale: bool) -> Result<TuningProblem> {
    let (n1, n2, x0) = load_image(config)?;
    let n = n1 * n2;
    let sigma = config.sigma.unwrap_or(10.0);
    let phi: Arc<dyn LinearMap> = match config.sensing {
        Sensing::Random => Arc::new(make_random_sensing(
            n1,
            n2,
            config.observe_ratio,
            &mut rng_for(config.seed, streams::OPERATOR),
        )?),
        Sensing::Identity => Arc::new(Identity::new(n)),
    };
    let (k, layout): (Arc<dyn LinearMap>, ParamLayout) = match config.transform {
        Transform::Wavelet => {
            let w = make_undecimated_wavelet(n1, n2, config.scales)?;
            let layout = if per_scale {
                ParamLayout::multiscale(w.band_len(), config.scales)
            } else {
                ParamLayout::global(2 * config.scales * w.band_len())
            };
            (Arc::new(w), layout)
        }
        Transform::Identity => (Arc::new(Identity::new(n)), ParamLayout::global(n)),
    };
    let y = observe(config, phi.as_ref(), &x0, sigma);
    let x_ls = least_squares(phi.clone(), &y)?;
    let pen = L1Penalty::new(layout);
    let lambda0 = lambda_init(phi.out_dim(), sigma, &pen.regularizer_values(&k.apply(&x_ls)))?;
    let step = config.step.unwrap_or(0.95 / k.norm_bound());
    let r = config.step_ratio;
    let solver = SolverConfig::cp(step / r, step * r, 1.0).with_iters(config.iters);
    let scheme = Arc::new(CpScheme::least_squares(phi.clone(), k, &pen, &solver)?);
    let risk = risk_config(config, phi, sigma)?;
    Ok(TuningProblem {
        scheme,
        y,
        x0,
        x_ls,
        risk,
        lambda0,
        shape: (n1, n2),
        quality: Quality::Psnr,
    })
}

fn neighbourhood(problem: &TuningProblem, theta: &[f64], label: &str) -> Result<Vec<ComparisonRow>> {
    [0.75, 1.0, 1.25]
        .into_iter()
        .map(|f| {
            let t: Vec<f64> = theta.iter().map(|v| v * f).collect();
            let (x, report) = problem.evaluate(&t, false)?;
            Ok(ComparisonRow {
                label: label.to_string(),
                dim_lambda: t.len(),
                factor: f,
                sure: report.sure_value,
                quality: problem.quality_of(&x),
                theta: t,
            })
        })
        .collect()
}

/// Tunes the configured layout, and for comparison the other one, then
/// evaluates both at `{0.75, 1, 1.25}` times their optimum.
pub fn run_wavelet_cs(config: &ExperimentConfig) -> Result<PipelineOutput> {
    let started = Instant::now();
    let problem = build_wavelet_cs(config, config.per_scale)?;
    let sigma = problem.risk.sigma;
    let (mut out, _) = tune_and_record(&problem, config, sigma, started)?;
    let label = |per: bool| if per { "per-scale" } else { "global" };
    let mut rows = neighbourhood(&problem, &out.record.theta_star, label(config.per_scale))?;
    if config.scales > 1 && config.transform == Transform::Wavelet {
        let other = build_wavelet_cs(config, !config.per_scale)?;
        let (res, _) = other.tune(&config.tune_config(), config.multi_start)?;
        rows.extend(neighbourhood(&other, &res.theta, label(!config.per_scale))?);
    }
    out.record.comparison = rows;
    out.record.runtime_secs = started.elapsed().as_secs_f64();
    info!(
        "wavelet-cs: lambda* = {:?}, PSNR {:.2} dB (least squares {:.2} dB)",
        out.record.theta_star, out.record.quality, out.record.baseline_quality
    );
    Ok(out)
}

/// Soft-thresholding denoising of a compressible signal.
pub fn build_denoise_st(config: &ExperimentConfig) -> Result<TuningProblem> {
    let p = config.p;
    let sigma = config.sigma.unwrap_or(1.0);
    let model = Mu0Model {
        gamma: config.mu0_gamma,
        peak: config.mu0_peak,
    };
    let x0 = Vector::from_vec(model.generate(p, sigma));
    let phi: Arc<dyn LinearMap> = Arc::new(Identity::new(p));
    let y = observe(config, phi.as_ref(), &x0, sigma);
    let pen = L1Penalty::new(ParamLayout::global(p));
    let lambda0 = lambda_init(p, sigma, &pen.regularizer_values(&y))?;
    let solver = SolverConfig::gfb(config.step.unwrap_or(1.0)).with_iters(config.iters);
    let penalties: Vec<Arc<dyn Penalty>> = vec![Arc::new(pen)];
    let scheme = Arc::new(GfbScheme::new(phi.clone(), &penalties, p, &solver)?);
    let risk = risk_config(config, phi, sigma)?;
    Ok(TuningProblem {
        scheme,
        x_ls: y.clone(),
        y,
        x0,
        risk,
        lambda0,
        shape: (1, p),
        quality: Quality::RelativeError,
    })
}

pub fn run_denoise_st(config: &ExperimentConfig) -> Result<PipelineOutput> {
    let started = Instant::now();
    let problem = build_denoise_st(config)?;
    let sigma = problem.risk.sigma;
    let (mut out, _) = tune_and_record(&problem, config, sigma, started)?;
    out.record.runtime_secs = started.elapsed().as_secs_f64();
    Ok(out)
}

/// Best agreement over an FD step sweep: the bottom of the error V-curve,
/// which also skips steps whose stencil straddles a kink.
pub fn jacobian_report(name: &str, scheme: &dyn Scheme, y: &Vector, theta: &[f64]) -> Result<OracleReport> {
    let out = scheme.solve(y, &ParamVector::new(theta.to_vec())?, None, true)?;
    let propagated: Vec<f64> = out.jx.iter().flat_map(|c| c.iter().copied()).collect();
    let mut best: Option<OracleReport> = None;
    for step in [1e-6, 1e-7, 1e-8, 1e-9] {
        let fd = fd_jacobian_oracle(
            |t: &[f64]| Ok(scheme.solve(y, &ParamVector::new(t.to_vec())?, None, false)?.x),
            theta,
            step,
        )?;
        let r = OracleReport::compare(name, fd.as_slice(), &propagated, 1e-3, 1e-12);
        if best.as_ref().is_none_or(|b| r.rel_error < b.rel_error) {
            best = Some(r);
        }
    }
    Ok(best.expect("non-empty sweep"))
}

/// Small-scale checks of the propagated Jacobians and of the risk
/// estimates against brute-force references.
pub fn run_oracle_suite(config: &ExperimentConfig) -> Result<Vec<OracleReport>> {
    let mut reports = Vec::new();
    let small = |e: Experiment, n1: usize, n2: usize| {
        let mut c = ExperimentConfig::defaults(e);
        c.seed = config.seed;
        c.n1 = n1;
        c.n2 = n2;
        c.p = 32;
        c
    };

    let p = build_denoise_st(&small(Experiment::DenoiseSt, 1, 1))?;
    reports.push(jacobian_report(
        "jacobian/denoise-st",
        p.scheme.as_ref(),
        &p.y,
        p.lambda0.values(),
    )?);
    let mut mcfg = small(Experiment::Matcomp, 12, 6);
    mcfg.observe_ratio = 0.5;
    let m = build_matcomp(&mcfg)?.problem;
    reports.push(jacobian_report(
        "jacobian/matcomp",
        m.scheme.as_ref(),
        &m.y,
        m.lambda0.values(),
    )?);
    let mut tv_cfg = small(Experiment::TvDeblur, 8, 8);
    tv_cfg.rects = 3;
    let t = build_tv_deblur(&tv_cfg)?;
    reports.push(jacobian_report(
        "jacobian/tv-deblur",
        t.scheme.as_ref(),
        &t.y,
        t.lambda0.values(),
    )?);
    let mut wcfg = small(Experiment::WaveletCs, 16, 16);
    wcfg.scales = 2;
    let w = build_wavelet_cs(&wcfg, true)?;
    reports.push(jacobian_report(
        "jacobian/wavelet-cs",
        w.scheme.as_ref(),
        &w.y,
        w.lambda0.values(),
    )?);

    // SURE of soft-thresholding is unbiased for the prediction risk.
    let (dim, sigma, lam) = (64usize, 1.0, 1.5);
    let mu0 = Vector::from_vec(Mu0Model::default().generate(dim, sigma));
    let est = mc_expectation_oracle(
        |rng| &mu0 + gaussian(dim, rng) * sigma,
        |y: &Vector| {
            let x = crate::prox::soft_threshold(y, lam);
            let active = y.iter().filter(|v| v.abs() > lam).count() as f64;
            let sure = (&x - y).norm_squared() - dim as f64 * sigma * sigma + 2.0 * sigma * sigma * active;
            sure - (&x - &mu0).norm_squared()
        },
        2000,
        config.seed,
    )?;
    reports.push(OracleReport::compare(
        "mc/sure-unbiased",
        &[0.0],
        &[est.mean],
        3.0 * est.std_error,
        1.0,
    ));

    // Probe-based DOF of a linear shrinkage equals its trace on average.
    let dim = 128usize;
    let shrink = 1.0 / (1.0 + 0.5);
    let weight = make_risk_weight(crate::operators::RiskMode::Prediction, Arc::new(Identity::new(dim)))?;
    let est = mc_expectation_oracle(
        |rng| gaussian(dim, rng),
        |delta: &Vector| dof_mc(&(delta * shrink), delta, &weight).unwrap_or(f64::NAN),
        10_000,
        config.seed.wrapping_add(1),
    )?;
    let exact = dim as f64 * shrink;
    reports.push(OracleReport::compare(
        "mc/dof-trace",
        &[exact],
        &[est.mean],
        3.0 * est.std_error / exact,
        1.0,
    ));
    Ok(reports)
}
