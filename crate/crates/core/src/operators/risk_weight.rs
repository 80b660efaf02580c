use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LinearMap, PINV_REL_TOL};
use crate::error::{check_len, Error, Result};
use crate::linalg::{conjugate_gradient, hutchinson_trace, Vector};

/// Largest observation dimension for which `Phi Phi^*` is formed explicitly.
pub const DIRECT_GRAM_MAX: usize = 4096;
/// Probes used when the trace of `(Phi Phi^*)^+` has to be estimated.
pub const HUTCHINSON_PROBES: usize = 128;
const HUTCHINSON_SEED: u64 = 0x5eed_7ace;

/// Which risk the generalized SURE estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskMode {
    /// `A = Id`: prediction risk `E||Phi x - Phi x0||^2`.
    Prediction,
    /// `A = Phi^*(Phi Phi^*)^+`: risk of the projection onto `ker(Phi)^perp`.
    Projection,
    /// `A = (Phi^*Phi)^{-1}Phi^*`: estimation risk, needs `Phi` injective.
    Estimation,
}

impl std::str::FromStr for RiskMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "prediction" | "id" => Ok(RiskMode::Prediction),
            "projection" => Ok(RiskMode::Projection),
            "estimation" => Ok(RiskMode::Estimation),
            other => Err(Error::config(format!("unknown risk mode '{other}'"))),
        }
    }
}

/// Strategy for applying `(Phi Phi^*)^+`.
#[derive(Debug, Clone)]
pub enum GramPinv {
    /// The operator knows its own Gram pseudo-inverse.
    Structured(Arc<dyn LinearMap>),
    /// Explicit pseudo-inverse of the `P x P` Gram matrix.
    Dense(DMatrix<f64>),
    /// Conjugate gradient on `G^2 z = G b`, which is consistent even when
    /// `b` has a component outside the range of `G = Phi Phi^*`.
    Iterative { phi: Arc<dyn LinearMap>, tol: f64 },
}

impl GramPinv {
    pub fn for_operator(phi: Arc<dyn LinearMap>) -> Self {
        let p = phi.out_dim();
        if phi.gram_pinv(&Vector::zeros(p), PINV_REL_TOL).is_some() {
            return GramPinv::Structured(phi);
        }
        if p <= DIRECT_GRAM_MAX {
            let gram = explicit_gram(phi.as_ref());
            let eig = SymmetricEigen::new(gram);
            let cut = PINV_REL_TOL * eig.eigenvalues.amax();
            let inv = eig.eigenvalues.map(|l| if l > cut { 1.0 / l } else { 0.0 });
            let pinv = &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
            return GramPinv::Dense(pinv);
        }
        GramPinv::Iterative { phi, tol: 1e-10 }
    }

    pub fn apply(&self, rhs: &Vector) -> Result<Vector> {
        match self {
            GramPinv::Structured(phi) => Ok(phi
                .gram_pinv(rhs, PINV_REL_TOL)
                .expect("structured operator lost its Gram pseudo-inverse")),
            GramPinv::Dense(m) => Ok(m * rhs),
            GramPinv::Iterative { phi, tol } => {
                let gram = |v: &Vector| phi.apply(&phi.adjoint(v));
                let b = gram(rhs);
                let max_iter = 20 * phi.out_dim().max(50);
                conjugate_gradient(|v| gram(&gram(v)), &b, *tol, max_iter)
            }
        }
    }

    /// Exact trace when available, else `None`.
    pub fn exact_trace(&self) -> Option<f64> {
        match self {
            GramPinv::Structured(phi) => phi.gram_pinv_trace(PINV_REL_TOL),
            GramPinv::Dense(m) => Some(m.trace()),
            GramPinv::Iterative { .. } => None,
        }
    }

    pub fn rank(&self) -> Option<usize> {
        match self {
            GramPinv::Structured(phi) => phi.gram_rank(PINV_REL_TOL),
            GramPinv::Dense(m) => {
                let eig = SymmetricEigen::new(m.clone());
                let cut = PINV_REL_TOL * eig.eigenvalues.amax();
                Some(eig.eigenvalues.iter().filter(|&&l| l > cut).count())
            }
            GramPinv::Iterative { .. } => None,
        }
    }

    /// Hutchinson estimate of the trace with a fixed-seed probe stream.
    pub fn hutchinson_trace(&self, dim: usize, probes: usize) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(HUTCHINSON_SEED);
        let mut failure = None;
        let t = hutchinson_trace(
            |v| match self.apply(v) {
                Ok(r) => r,
                Err(e) => {
                    failure = Some(e);
                    Vector::zeros(dim)
                }
            },
            dim,
            probes,
            &mut rng,
        );
        match failure {
            Some(e) => Err(e),
            None => Ok(t),
        }
    }
}

pub(crate) fn explicit_gram(phi: &dyn LinearMap) -> DMatrix<f64> {
    let p = phi.out_dim();
    let mut gram = DMatrix::zeros(p, p);
    let mut e = Vector::zeros(p);
    for j in 0..p {
        e[j] = 1.0;
        let col = phi.apply(&phi.adjoint(&e));
        gram.set_column(j, &col);
        e[j] = 0.0;
    }
    // Symmetrize away rounding noise.
    (&gram + gram.transpose()) * 0.5
}

/// The weighting `A^*A` used by the generalized SURE.
#[derive(Debug, Clone)]
pub struct RiskWeight {
    mode: RiskMode,
    dim: usize,
    pinv: Option<GramPinv>,
    trace: f64,
}

/// Builds `A^*A` for the given mode. In both Projection and Estimation modes
/// `A^*A = (Phi Phi^*)^+`; Estimation additionally requires `rank Phi = N`.
pub fn make_risk_weight(mode: RiskMode, phi: Arc<dyn LinearMap>) -> Result<RiskWeight> {
    let p = phi.out_dim();
    if mode == RiskMode::Prediction {
        return Ok(RiskWeight {
            mode,
            dim: p,
            pinv: None,
            trace: p as f64,
        });
    }
    let n = phi.in_dim();
    let pinv = GramPinv::for_operator(phi);
    if mode == RiskMode::Estimation {
        let rank = pinv.rank();
        let injective = match rank {
            Some(r) => r == n,
            None => n <= p,
        };
        if !injective {
            return Err(Error::config(format!(
                "estimation risk needs an injective operator (rank {} < N = {n}); use the projection mode instead",
                rank.map_or("unknown".to_string(), |r| r.to_string())
            )));
        }
    }
    let trace = match pinv.exact_trace() {
        Some(t) => t,
        None => pinv.hutchinson_trace(p, HUTCHINSON_PROBES)?,
    };
    Ok(RiskWeight {
        mode,
        dim: p,
        pinv: Some(pinv),
        trace,
    })
}

impl RiskWeight {
    pub fn mode(&self) -> RiskMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trace_ata(&self) -> f64 {
        self.trace
    }

    pub fn apply_ata(&self, v: &Vector) -> Result<Vector> {
        check_len(v.len(), self.dim, "risk weight input")?;
        match &self.pinv {
            None => Ok(v.clone()),
            Some(p) => p.apply(v),
        }
    }

    /// `||A v||^2 = <v, A^*A v>`.
    pub fn weighted_sq_norm(&self, v: &Vector) -> Result<f64> {
        Ok(v.dot(&self.apply_ata(v)?))
    }

    pub fn gram_pinv(&self) -> Option<&GramPinv> {
        self.pinv.as_ref()
    }
}

/// Minimum-norm least-squares estimate `Phi^*(Phi Phi^*)^+ y`.
pub fn least_squares(phi: Arc<dyn LinearMap>, y: &Vector) -> Result<Vector> {
    check_len(y.len(), phi.out_dim(), "least squares observation")?;
    let pinv = GramPinv::for_operator(phi.clone());
    Ok(phi.adjoint(&pinv.apply(y)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{gaussian_kernel, lowpass_frequency_mask, make_mask, make_periodic_convolution, DenseMap};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vector {
        Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn prediction_mode_is_identity() {
        let phi: Arc<dyn LinearMap> = Arc::new(make_mask(6, &[0, 2, 5]).unwrap());
        let w = make_risk_weight(RiskMode::Prediction, phi).unwrap();
        let v = Vector::from_vec(vec![1.0, -2.0, 3.0]);
        assert_eq!(w.apply_ata(&v).unwrap(), v);
        assert_eq!(w.trace_ata(), 3.0);
    }

    #[test]
    fn projection_on_mask_gives_support_projector() {
        let mask = make_mask(5, &[1, 3]).unwrap();
        let phi: Arc<dyn LinearMap> = Arc::new(mask.clone());
        let w = make_risk_weight(RiskMode::Projection, phi.clone()).unwrap();
        for i in 0..5 {
            let mut e = Vector::zeros(5);
            e[i] = 1.0;
            let pe = phi.adjoint(&w.apply_ata(&phi.apply(&e)).unwrap());
            let expected = if i == 1 || i == 3 { e.clone() } else { Vector::zeros(5) };
            assert!((pe - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn projection_sandwich_is_idempotent_and_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = DMatrix::from_fn(6, 10, |_, _| rng.sample::<f64, _>(StandardNormal));
        // Rank-deficient: duplicate a row.
        let mut m = m;
        let r0 = m.row(0).clone_owned();
        m.set_row(5, &r0);
        let phi: Arc<dyn LinearMap> = Arc::new(DenseMap::new(m));
        let w = make_risk_weight(RiskMode::Projection, phi.clone()).unwrap();
        let proj = |x: &Vector| phi.adjoint(&w.apply_ata(&phi.apply(x)).unwrap());
        for _ in 0..10 {
            let x = random_vec(10, &mut rng);
            let once = proj(&x);
            assert!((proj(&once) - &once).norm() < 1e-8 * x.norm());
            let v = random_vec(6, &mut rng);
            assert!(v.dot(&w.apply_ata(&v).unwrap()) >= -1e-12);
        }
        assert!(make_risk_weight(RiskMode::Estimation, phi).is_err());
    }

    #[test]
    fn dense_and_iterative_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = DMatrix::from_fn(8, 12, |_, _| rng.sample::<f64, _>(StandardNormal));
        let phi: Arc<dyn LinearMap> = Arc::new(Composed2(DenseMap::new(m)));
        let dense = GramPinv::for_operator(phi.clone());
        assert!(matches!(dense, GramPinv::Dense(_)));
        let iter = GramPinv::Iterative { phi, tol: 1e-12 };
        let b = random_vec(8, &mut rng);
        let a = dense.apply(&b).unwrap();
        let c = iter.apply(&b).unwrap();
        assert!((&a - &c).norm() < 1e-6 * c.norm());
    }

    // Hides the structured Gram routines of the wrapped operator.
    #[derive(Debug)]
    struct Composed2(DenseMap);
    impl LinearMap for Composed2 {
        fn in_dim(&self) -> usize {
            self.0.in_dim()
        }
        fn out_dim(&self) -> usize {
            self.0.out_dim()
        }
        fn apply(&self, x: &Vector) -> Vector {
            self.0.apply(x)
        }
        fn adjoint(&self, y: &Vector) -> Vector {
            self.0.adjoint(y)
        }
        fn norm_bound(&self) -> f64 {
            self.0.norm_bound()
        }
    }

    #[test]
    fn hutchinson_trace_close_to_exact_on_large_convolution() {
        let n = 256;
        let kernel = gaussian_kernel(n, n, 2.0);
        let conv = make_periodic_convolution(n, n, &kernel, &lowpass_frequency_mask(n, n, 0.2)).unwrap();
        let phi: Arc<dyn LinearMap> = Arc::new(conv);
        let w = make_risk_weight(RiskMode::Projection, phi).unwrap();
        let pinv = w.gram_pinv().unwrap();
        let exact = pinv.exact_trace().unwrap();
        let est = pinv.hutchinson_trace(n * n, HUTCHINSON_PROBES).unwrap();
        assert!((est - exact).abs() < 0.02 * exact, "{est} vs {exact}");
    }
}
