use std::sync::Arc;

use nalgebra::DMatrix;

use super::{Linearization, Linearized, ParamVector, Penalty, ProxAtom};
use crate::error::{check_len, Error, Result};
use crate::linalg::Vector;

/// Singular values closer than this fraction of the largest one are treated
/// as equal in the divided differences.
pub const SPECTRAL_GAP_TOL: f64 = 1e-10;

/// Thin SVD of a matrix with at least as many rows as columns, singular
/// values descending, each left vector's largest-magnitude entry positive.
fn sorted_svd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    debug_assert!(m.nrows() >= m.ncols());
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, 500)
        .ok_or_else(|| Error::numerical("SVD did not converge"))?;
    let u = svd.u.ok_or_else(|| Error::numerical("SVD returned no left vectors"))?;
    let vt = svd
        .v_t
        .ok_or_else(|| Error::numerical("SVD returned no right vectors"))?;
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut us = DMatrix::zeros(m.nrows(), k);
    let mut vs = DMatrix::zeros(m.ncols(), k);
    let mut s = Vec::with_capacity(k);
    for (c, &i) in order.iter().enumerate() {
        let mut ui = u.column(i).into_owned();
        let mut vi = vt.row(i).transpose();
        let pivot = ui
            .iter()
            .cloned()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            ui.neg_mut();
            vi.neg_mut();
        }
        us.set_column(c, &ui);
        vs.set_column(c, &vi);
        s.push(svd.singular_values[i]);
    }
    Ok((us, s, vs))
}

/// Spectral soft thresholding and its derivative at one matrix.
#[derive(Clone)]
struct SpectralLin {
    transposed: bool,
    u: DMatrix<f64>,
    s: Vec<f64>,
    v: DMatrix<f64>,
    rho: f64,
}

impl SpectralLin {
    fn new(x: &DMatrix<f64>, rho: f64) -> Result<Self> {
        let transposed = x.nrows() < x.ncols();
        let tall = if transposed { x.transpose() } else { x.clone() };
        let (u, s, v) = sorted_svd(&tall)?;
        Ok(SpectralLin {
            transposed,
            u,
            s,
            v,
            rho,
        })
    }

    fn f(&self, i: usize) -> f64 {
        (self.s[i] - self.rho).max(0.0)
    }

    fn df(&self, i: usize) -> f64 {
        if self.s[i] > self.rho {
            1.0
        } else {
            0.0
        }
    }

    fn orient(&self, m: DMatrix<f64>) -> DMatrix<f64> {
        if self.transposed {
            m.transpose()
        } else {
            m
        }
    }

    fn value(&self) -> DMatrix<f64> {
        let f = Vector::from_fn(self.s.len(), |i, _| self.f(i));
        self.orient(&self.u * DMatrix::from_diagonal(&f) * self.v.transpose())
    }

    /// `-sum_{s_i > rho} u_i v_i^T`.
    fn d_rho(&self) -> DMatrix<f64> {
        let g = Vector::from_fn(self.s.len(), |i, _| -self.df(i));
        self.orient(&self.u * DMatrix::from_diagonal(&g) * self.v.transpose())
    }

    fn apply(&self, delta: &DMatrix<f64>) -> DMatrix<f64> {
        let delta = if self.transposed {
            delta.transpose()
        } else {
            delta.clone()
        };
        let k = self.s.len();
        let smax = self.s.first().cloned().unwrap_or(0.0);
        let tol = SPECTRAL_GAP_TOL * smax;
        let dv = &delta * &self.v;
        let bar = self.u.tr_mul(&dv);
        let mut inner = DMatrix::zeros(k, k);
        for i in 0..k {
            inner[(i, i)] = self.df(i) * bar[(i, i)];
            for j in 0..k {
                if i == j {
                    continue;
                }
                let (si, sj) = (self.s[i], self.s[j]);
                let sym = 0.5 * (bar[(i, j)] + bar[(j, i)]);
                let skew = 0.5 * (bar[(i, j)] - bar[(j, i)]);
                let gs = if (si - sj).abs() < tol {
                    self.df(i)
                } else {
                    (self.f(i) - self.f(j)) / (si - sj)
                };
                let ga = if si + sj < tol {
                    self.df(i)
                } else {
                    (self.f(i) + self.f(j)) / (si + sj)
                };
                inner[(i, j)] = gs * sym + ga * skew;
            }
        }
        let mut out = &self.u * inner * self.v.transpose();
        // Component leaving the column space of U.
        let ratio = Vector::from_fn(k, |j, _| {
            let f = self.f(j);
            if f > 0.0 {
                f / self.s[j]
            } else {
                0.0
            }
        });
        if self.u.nrows() > k {
            let perp = dv - &self.u * &bar;
            out += perp * DMatrix::from_diagonal(&ratio) * self.v.transpose();
        }
        self.orient(out)
    }
}

/// Singular value soft thresholding at level `rho`.
pub fn nuclear_prox(x: &DMatrix<f64>, rho: f64) -> Result<DMatrix<f64>> {
    Ok(SpectralLin::new(x, rho)?.value())
}

/// Directional derivative of [`nuclear_prox`] in `x` along `delta`.
pub fn nuclear_prox_jac_input(x: &DMatrix<f64>, rho: f64, delta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if delta.shape() != x.shape() {
        return Err(Error::config("direction shape differs from matrix shape"));
    }
    Ok(SpectralLin::new(x, rho)?.apply(delta))
}

/// Derivative of [`nuclear_prox`] with respect to `rho`.
pub fn nuclear_prox_jac_theta(x: &DMatrix<f64>, rho: f64) -> Result<DMatrix<f64>> {
    Ok(SpectralLin::new(x, rho)?.d_rho())
}

fn from_row_major(n1: usize, n2: usize, v: &Vector) -> DMatrix<f64> {
    DMatrix::from_row_slice(n1, n2, v.as_slice())
}

fn to_row_major(m: &DMatrix<f64>) -> Vector {
    Vector::from_column_slice(m.transpose().as_slice())
}

/// `Prox_{gamma theta ||.||_*}` on row-major `n1 x n2` matrices.
#[derive(Debug, Clone)]
pub struct NuclearAtom {
    n1: usize,
    n2: usize,
    step: f64,
}

impl NuclearAtom {
    pub fn new(n1: usize, n2: usize, step: f64) -> Self {
        NuclearAtom { n1, n2, step }
    }
}

struct NuclearLin {
    n1: usize,
    n2: usize,
    step: f64,
    spec: SpectralLin,
}

impl Linearization for NuclearLin {
    fn jac_input(&self, dir: &Vector) -> Vector {
        to_row_major(&self.spec.apply(&from_row_major(self.n1, self.n2, dir)))
    }
    fn jac_theta(&self, k: usize) -> Option<Vector> {
        (k == 0).then(|| to_row_major(&self.spec.d_rho()) * self.step)
    }
}

impl ProxAtom for NuclearAtom {
    fn dim(&self) -> usize {
        self.n1 * self.n2
    }

    fn linearize(&self, point: &Vector, _y: &Vector, theta: &ParamVector) -> Result<Linearized> {
        check_len(point.len(), self.dim(), "nuclear prox input")?;
        check_len(theta.len(), 1, "nuclear prox parameters")?;
        let spec = SpectralLin::new(&from_row_major(self.n1, self.n2, point), self.step * theta.get(0))?;
        Ok(Linearized {
            value: to_row_major(&spec.value()),
            lin: Box::new(NuclearLin {
                n1: self.n1,
                n2: self.n2,
                step: self.step,
                spec,
            }),
        })
    }
}

/// `theta ||X||_*` for row-major `n1 x n2` matrices.
#[derive(Debug, Clone)]
pub struct NuclearPenalty {
    pub n1: usize,
    pub n2: usize,
}

impl NuclearPenalty {
    pub fn regularizer_value(&self, x: &Vector) -> f64 {
        from_row_major(self.n1, self.n2, x).singular_values().sum()
    }
}

impl Penalty for NuclearPenalty {
    fn prox_atom(&self, step: f64) -> Arc<dyn ProxAtom> {
        Arc::new(NuclearAtom::new(self.n1, self.n2, step))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::tests_support::{check_fd_input, check_fd_theta, check_nonexpansive};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn diag3() -> DMatrix<f64> {
        DMatrix::from_diagonal(&Vector::from_vec(vec![3.0, 1.0, 0.2]))
    }

    fn random_mat(n1: usize, n2: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n1, n2, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn diagonal_examples() {
        let out = nuclear_prox(&diag3(), 0.5).unwrap();
        let expected = DMatrix::from_diagonal(&Vector::from_vec(vec![2.5, 0.5, 0.0]));
        assert!((out - expected).norm() < 1e-12);
        let z = nuclear_prox(&(DMatrix::identity(2, 2) * 0.5), 0.5).unwrap();
        assert!(z.norm() < 1e-12);
        let jt = nuclear_prox_jac_theta(&diag3(), 0.5).unwrap();
        let expected = DMatrix::from_diagonal(&Vector::from_vec(vec![-1.0, -1.0, 0.0]));
        assert!((jt - expected).norm() < 1e-12);
    }

    #[test]
    fn derivative_branches() {
        let mut e = DMatrix::zeros(3, 3);
        e[(0, 0)] = 1.0;
        let d = nuclear_prox_jac_input(&diag3(), 0.5, &e).unwrap();
        assert!((d - &e).norm() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let small = random_mat(4, 3, &mut rng) * 0.01;
        let dir = random_mat(4, 3, &mut rng);
        assert!(nuclear_prox_jac_input(&small, 10.0, &dir).unwrap().norm() < 1e-14);
        assert!(nuclear_prox_jac_theta(&small, 10.0).unwrap().norm() < 1e-14);
    }

    #[test]
    fn rank_counts_surviving_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let x = random_mat(6, 4, &mut rng);
            let sv = x.singular_values();
            let rho = 1.0;
            let expected = sv.iter().filter(|&&s| s > rho).count();
            assert_eq!(nuclear_prox(&x, rho).unwrap().rank(1e-9), expected);
        }
    }

    #[test]
    fn matches_finite_differences_on_rectangular_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = Vector::zeros(0);
        for &(n1, n2) in &[(5, 3), (3, 5), (4, 4)] {
            let atom = NuclearAtom::new(n1, n2, 0.7);
            for _ in 0..10 {
                let x = Vector::from_fn(n1 * n2, |_, _| rng.sample(StandardNormal));
                let theta = ParamVector::scalar(0.5 + rng.random::<f64>()).unwrap();
                check_fd_input(&atom, &x, &e, &theta, &mut rng, 1e-5);
                check_fd_theta(&atom, &x, &e, &theta, 1e-6);
            }
            check_nonexpansive(&atom, &e, &ParamVector::scalar(0.8).unwrap(), &mut rng);
        }
    }

    #[test]
    fn preserves_active_singular_subspaces() {
        // Well separated spectrum 8, 4, 2, 1, 0.5.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q1 = random_mat(7, 5, &mut rng).qr().q();
        let q2 = random_mat(5, 5, &mut rng).qr().q();
        let s = Vector::from_vec(vec![8.0, 4.0, 2.0, 1.0, 0.5]);
        let x = &q1 * DMatrix::from_diagonal(&s) * q2.transpose();
        let out = nuclear_prox(&x, 1.5).unwrap();
        let (u, _, v) = sorted_svd(&out).unwrap();
        let u_out = u.columns(0, 3).into_owned();
        let u_in = q1.columns(0, 3).into_owned();
        let resid = &u_out - &u_in * (u_in.transpose() * &u_out);
        assert!(resid.norm() < 1e-8);
        let v_out = v.columns(0, 3).into_owned();
        let v_in = q2.columns(0, 3).into_owned();
        let resid = &v_out - &v_in * (v_in.transpose() * &v_out);
        assert!(resid.norm() < 1e-8);
    }
}
