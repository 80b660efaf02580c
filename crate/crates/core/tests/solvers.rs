use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sugar::operators::{make_discrete_gradient, make_mask, make_undecimated_wavelet, DenseMap, Identity, LinearMap};
use sugar::oracles::fd_jacobian_oracle;
use sugar::prox::{
    soft_threshold, soft_threshold_jacs, BlockL12Penalty, L1Penalty, ParamLayout, ParamVector, Penalty, TvConstraint,
    ZeroPenalty,
};
use sugar::solvers::{cp_solve, gfb_solve, CpScheme, GfbScheme, Scheme, SolverConfig};
use sugar::Vector;

fn randn(n: usize, rng: &mut ChaCha8Rng) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn rel(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-12)
}

fn jac_vs_fd(scheme: &dyn Scheme, y: &Vector, theta: &[f64]) -> f64 {
    let out = scheme
        .solve(y, &ParamVector::new(theta.to_vec()).unwrap(), None, true)
        .unwrap();
    let fd = fd_jacobian_oracle(
        |t: &[f64]| Ok(scheme.solve(y, &ParamVector::new(t.to_vec()).unwrap(), None, false)?.x),
        theta,
        1e-7,
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    for (k, col) in out.jx.iter().enumerate() {
        worst = worst.max(rel(col, &fd.column(k).into_owned()));
    }
    worst
}

#[test]
fn forward_backward_denoising_reaches_soft_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 30;
    let phi: Arc<dyn LinearMap> = Arc::new(Identity::new(n));
    let pen: Arc<dyn Penalty> = Arc::new(L1Penalty::new(ParamLayout::global(n)));
    let scheme = GfbScheme::new(phi, &[pen], n, &SolverConfig::gfb(1.0)).unwrap();
    let y = randn(n, &mut rng) * 2.0;
    let delta = randn(n, &mut rng);
    let lam = 0.8;
    let out = gfb_solve(&scheme, &y, &ParamVector::scalar(lam).unwrap(), Some(&delta), true).unwrap();
    let (mask, jr) = soft_threshold_jacs(&y, lam);
    assert!((out.x - soft_threshold(&y, lam)).norm() < 1e-12);
    assert!((out.dx.unwrap() - mask.component_mul(&delta)).norm() < 1e-12);
    assert!((&out.jx[0] - jr).norm() < 1e-12);
    assert_eq!(out.jac_norms.len(), 100);
}

#[test]
fn null_prox_gives_gradient_descent_and_zero_jacobian() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = DMatrix::from_fn(15, 10, |_, _| rng.sample::<f64, _>(StandardNormal));
    let phi: Arc<dyn LinearMap> = Arc::new(DenseMap::new(m.clone()));
    let l = phi.norm_bound().powi(2);
    let pen: Arc<dyn Penalty> = Arc::new(ZeroPenalty { dim: 10 });
    let nu = 1.0 / l;
    let scheme = GfbScheme::new(phi, &[pen], 10, &SolverConfig::gfb(nu).with_iters(50)).unwrap();
    let y = randn(15, &mut rng);
    let out = gfb_solve(&scheme, &y, &ParamVector::scalar(1.0).unwrap(), None, true).unwrap();
    let mut x = Vector::zeros(10);
    for _ in 0..50 {
        x -= m.transpose() * (&m * &x - &y) * nu;
    }
    assert!((out.x - x).norm() < 1e-10);
    assert_eq!(out.jx[0].norm(), 0.0);
    assert!(out.jac_norms.iter().all(|&v| v == 0.0));
}

#[test]
fn step_sizes_are_validated() {
    let phi: Arc<dyn LinearMap> = Arc::new(Identity::new(4));
    let pen: Arc<dyn Penalty> = Arc::new(L1Penalty::new(ParamLayout::global(4)));
    assert!(GfbScheme::new(phi.clone(), &[pen.clone()], 4, &SolverConfig::gfb(2.0)).is_err());
    assert!(GfbScheme::new(phi.clone(), &[pen.clone()], 4, &SolverConfig::gfb(0.0)).is_err());
    assert!(CpScheme::least_squares(phi.clone(), phi.clone(), pen.as_ref(), &SolverConfig::cp(1.0, 1.0, 1.0)).is_err());
    assert!(CpScheme::least_squares(phi.clone(), phi.clone(), pen.as_ref(), &SolverConfig::cp(0.5, 0.5, 1.5)).is_err());
    assert!(CpScheme::least_squares(phi.clone(), phi, pen.as_ref(), &SolverConfig::cp(0.5, 0.5, 1.0)).is_ok());
}

#[test]
fn gfb_jacobian_matches_fd_through_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 20;
    let m = DMatrix::from_fn(14, n, |_, _| rng.sample::<f64, _>(StandardNormal) / 4.0);
    let phi: Arc<dyn LinearMap> = Arc::new(DenseMap::new(m));
    let l = phi.norm_bound().powi(2);
    let layout = ParamLayout::from_segments(n, vec![(0..10, 0), (10..20, 1)]).unwrap();
    let pen: Arc<dyn Penalty> = Arc::new(L1Penalty::new(layout));
    let scheme = GfbScheme::new(phi, &[pen], n, &SolverConfig::gfb(1.5 / l).with_iters(200)).unwrap();
    let x0 = Vector::from_fn(n, |i, _| if i % 4 == 0 { 3.0 } else { 0.0 });
    let y = scheme.phi().apply(&x0) + randn(14, &mut rng) * 0.1;
    let err = jac_vs_fd(&scheme, &y, &[0.05, 0.08]);
    assert!(err < 1e-4, "{err:e}");
}

#[test]
fn gfb_two_terms_tv_jacobian_matches_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (n1, n2) = (5, 5);
    let n = n1 * n2;
    let pattern: Vec<usize> = (0..n).filter(|i| i % 3 != 1).collect();
    let phi: Arc<dyn LinearMap> = Arc::new(make_mask(n, &pattern).unwrap());
    let grad = Arc::new(make_discrete_gradient(n1, n2).unwrap());
    let pens: Vec<Arc<dyn Penalty>> = vec![
        Arc::new(BlockL12Penalty {
            prefix: n,
            groups: n,
            block_dim: 2,
        }),
        Arc::new(TvConstraint { grad }),
    ];
    let scheme = GfbScheme::new(phi.clone(), &pens, 3 * n, &SolverConfig::gfb(1.0).with_iters(60)).unwrap();
    let img = Vector::from_fn(n, |i, _| if i % n2 < 2 { 1.0 } else { 0.0 });
    let y = phi.apply(&img) + randn(pattern.len(), &mut rng) * 0.1;
    let err = jac_vs_fd(&scheme, &y, &[0.3]);
    assert!(err < 1e-4, "{err:e}");
}

#[test]
fn primal_dual_agrees_with_forward_backward_on_denoising() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 25;
    let id: Arc<dyn LinearMap> = Arc::new(Identity::new(n));
    let pen = L1Penalty::new(ParamLayout::global(n));
    let cp = CpScheme::least_squares(
        id.clone(),
        id.clone(),
        &pen,
        &SolverConfig::cp(0.9, 0.9, 1.0).with_iters(500),
    )
    .unwrap();
    let y = randn(n, &mut rng) * 2.0;
    let theta = ParamVector::scalar(0.7).unwrap();
    let out = cp_solve(&cp, &y, &theta, None, false).unwrap();
    assert!((out.x - soft_threshold(&y, 0.7)).norm() < 1e-6);
    let tiny = cp_solve(&cp, &y, &ParamVector::scalar(1e-12).unwrap(), None, false).unwrap();
    assert!((tiny.x - &y).norm() < 1e-6);
}

#[test]
fn primal_dual_wavelet_jacobian_matches_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (n1, n2) = (16, 16);
    let n = n1 * n2;
    let pattern: Vec<usize> = (0..n).filter(|i| (i * 7) % 5 < 3).collect();
    let phi: Arc<dyn LinearMap> = Arc::new(make_mask(n, &pattern).unwrap());
    let w = Arc::new(make_undecimated_wavelet(n1, n2, 1).unwrap());
    let k_norm = w.norm_bound();
    let pen = L1Penalty::new(ParamLayout::multiscale(n, 1));
    let step = 0.95 / k_norm;
    let scheme =
        CpScheme::least_squares(phi.clone(), w, &pen, &SolverConfig::cp(step, step, 1.0).with_iters(100)).unwrap();
    let img = Vector::from_fn(n, |i, _| if (i / n2) < 8 { 2.0 } else { 0.0 });
    let y = phi.apply(&img) + randn(pattern.len(), &mut rng) * 0.2;
    let err = jac_vs_fd(&scheme, &y, &[0.2]);
    assert!(err < 1e-4, "{err:e}");
}

#[test]
fn probe_derivative_is_linear_and_matches_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (n1, n2) = (8, 8);
    let n = n1 * n2;
    let pattern: Vec<usize> = (0..n).filter(|i| i % 2 == 0).collect();
    let phi: Arc<dyn LinearMap> = Arc::new(make_mask(n, &pattern).unwrap());
    let w = Arc::new(make_undecimated_wavelet(n1, n2, 1).unwrap());
    let pen = L1Penalty::new(ParamLayout::multiscale(n, 1));
    let step = 0.9 / w.norm_bound();
    let scheme = CpScheme::least_squares(phi.clone(), w, &pen, &SolverConfig::cp(step, step, 1.0)).unwrap();
    let y = randn(pattern.len(), &mut rng);
    let delta = randn(pattern.len(), &mut rng);
    let theta = ParamVector::scalar(0.3).unwrap();
    let a = cp_solve(&scheme, &y, &theta, Some(&delta), false).unwrap().dx.unwrap();
    let b = cp_solve(&scheme, &y, &theta, Some(&(&delta * 2.5)), false)
        .unwrap()
        .dx
        .unwrap();
    assert!((&a * 2.5 - b).norm() < 1e-12 * a.norm().max(1.0));
    let h = 1e-7;
    let plus = cp_solve(&scheme, &(&y + &delta * h), &theta, None, false).unwrap().x;
    let minus = cp_solve(&scheme, &(&y - &delta * h), &theta, None, false).unwrap().x;
    assert!(rel(&((plus - minus) / (2.0 * h)), &a) < 1e-5);
}

#[test]
fn forward_backward_objective_is_nonincreasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 20;
    let m = DMatrix::from_fn(12, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let phi: Arc<dyn LinearMap> = Arc::new(DenseMap::new(m.clone()));
    let l = phi.norm_bound().powi(2);
    let pen: Arc<dyn Penalty> = Arc::new(L1Penalty::new(ParamLayout::global(n)));
    let y = randn(12, &mut rng);
    let lam = 0.5;
    let objective = |x: &Vector| 0.5 * (&m * x - &y).norm_squared() + lam * x.lp_norm(1);
    let mut prev = f64::INFINITY;
    for iters in 1..40 {
        let scheme = GfbScheme::new(
            phi.clone(),
            &[pen.clone()],
            n,
            &SolverConfig::gfb(1.0 / l).with_iters(iters),
        )
        .unwrap();
        let x = gfb_solve(&scheme, &y, &ParamVector::scalar(lam).unwrap(), None, false)
            .unwrap()
            .x;
        let e = objective(&x);
        assert!(e <= prev + 1e-10);
        prev = e;
    }
}
