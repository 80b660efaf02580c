use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::{Linearization, Linearized, ParamVector, Penalty, ProxAtom};
use crate::error::{check_len, Error, Result};
use crate::linalg::Vector;

/// Componentwise shrinkage `sign(t) max(|t| - rho, 0)`.
pub fn soft_threshold(t: &Vector, rho: f64) -> Vector {
    t.map(|v| st(v, rho))
}

fn st(v: f64, rho: f64) -> f64 {
    if v > rho {
        v - rho
    } else if v < -rho {
        v + rho
    } else {
        0.0
    }
}

/// `(diag_input, jac_rho)`; entries with `|t_i| = rho` count as inactive.
pub fn soft_threshold_jacs(t: &Vector, rho: f64) -> (Vector, Vector) {
    let diag = t.map(|v| if v.abs() > rho { 1.0 } else { 0.0 });
    let jac = t.map(|v| if v.abs() > rho { -v.signum() } else { 0.0 });
    (diag, jac)
}

/// Which parameter thresholds which entries. Entries outside every segment
/// pass through the prox unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    dim: usize,
    segments: Vec<(Range<usize>, usize)>,
}

impl ParamLayout {
    /// One parameter for the whole vector.
    pub fn global(dim: usize) -> Self {
        ParamLayout {
            dim,
            segments: vec![(0..dim, 0)],
        }
    }

    /// Wavelet layout `[h_1, v_1, ..., h_J, v_J]`: parameter `j` for scale `j`.
    pub fn multiscale(band_len: usize, scales: usize) -> Self {
        let segments = (0..scales)
            .map(|j| (2 * j * band_len..(2 * j + 2) * band_len, j))
            .collect();
        ParamLayout {
            dim: 2 * scales * band_len,
            segments,
        }
    }

    pub fn from_segments(dim: usize, segments: Vec<(Range<usize>, usize)>) -> Result<Self> {
        let mut covered = vec![false; dim];
        for (r, _) in &segments {
            if r.end > dim {
                return Err(Error::config(format!("segment {r:?} exceeds dimension {dim}")));
            }
            for i in r.clone() {
                if covered[i] {
                    return Err(Error::config(format!("entry {i} belongs to two segments")));
                }
                covered[i] = true;
            }
        }
        Ok(ParamLayout { dim, segments })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_params(&self) -> usize {
        self.segments.iter().map(|(_, k)| k + 1).max().unwrap_or(0)
    }

    pub fn segments(&self) -> &[(Range<usize>, usize)] {
        &self.segments
    }

    fn check(&self, theta: &ParamVector) -> Result<()> {
        if theta.len() != self.num_params() {
            return Err(Error::config(format!(
                "layout needs {} parameters, got {}",
                self.num_params(),
                theta.len()
            )));
        }
        Ok(())
    }
}

/// Bandwise soft thresholding of `[h_1, v_1, ..., h_J, v_J]` with `rho_j` on
/// scale `j`. Returns the value, the input-Jacobian diagonal and the
/// `dim x J` parameter Jacobian.
pub fn multiscale_soft_threshold(
    t: &Vector,
    band_len: usize,
    rho: &ParamVector,
) -> Result<(Vector, Vector, DMatrix<f64>)> {
    let layout = ParamLayout::multiscale(band_len, rho.len());
    check_len(t.len(), layout.dim(), "multiscale coefficients")?;
    let atom = SoftThresholdAtom::new(layout, 1.0);
    let y = Vector::zeros(0);
    let lin = atom.linearize(t, &y, rho)?;
    let diag = lin.lin.jac_input(&Vector::from_element(t.len(), 1.0));
    let jac = atom.jac_theta(t, &y, rho)?;
    Ok((lin.value, diag, jac))
}

/// `Prox_{gamma sum_k theta_k ||x_{S_k}||_1}`.
#[derive(Debug, Clone)]
pub struct SoftThresholdAtom {
    layout: Arc<ParamLayout>,
    step: f64,
}

impl SoftThresholdAtom {
    pub fn new(layout: ParamLayout, step: f64) -> Self {
        SoftThresholdAtom {
            layout: Arc::new(layout),
            step,
        }
    }
}

struct SoftThresholdLin {
    layout: Arc<ParamLayout>,
    // 1 where the prox is locally the identity, 0 in the dead zone.
    mask: Vector,
    // -gamma sign(t) on active thresholded entries.
    slope: Vector,
}

impl Linearization for SoftThresholdLin {
    fn jac_input(&self, dir: &Vector) -> Vector {
        self.mask.component_mul(dir)
    }
    fn jac_theta(&self, k: usize) -> Option<Vector> {
        let mut col = Vector::zeros(self.mask.len());
        let mut any = false;
        for (r, p) in self.layout.segments() {
            if *p == k {
                any = true;
                col.rows_mut(r.start, r.len())
                    .copy_from(&self.slope.rows(r.start, r.len()));
            }
        }
        any.then_some(col)
    }
}

impl ProxAtom for SoftThresholdAtom {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn linearize(&self, point: &Vector, _y: &Vector, theta: &ParamVector) -> Result<Linearized> {
        check_len(point.len(), self.dim(), "soft-threshold input")?;
        self.layout.check(theta)?;
        let mut value = point.clone();
        let mut mask = Vector::from_element(point.len(), 1.0);
        let mut slope = Vector::zeros(point.len());
        for (r, k) in self.layout.segments() {
            let rho = self.step * theta.get(*k);
            for i in r.clone() {
                let t = point[i];
                value[i] = st(t, rho);
                if t.abs() > rho {
                    slope[i] = -self.step * t.signum();
                } else {
                    mask[i] = 0.0;
                }
            }
        }
        Ok(Linearized {
            value,
            lin: Box::new(SoftThresholdLin {
                layout: self.layout.clone(),
                mask,
                slope,
            }),
        })
    }
}

/// `sum_k theta_k ||x_{S_k}||_1`.
#[derive(Debug, Clone)]
pub struct L1Penalty {
    pub layout: ParamLayout,
}

impl L1Penalty {
    pub fn new(layout: ParamLayout) -> Self {
        L1Penalty { layout }
    }

    /// `R^k(x) = ||x_{S_k}||_1` for each parameter.
    pub fn regularizer_values(&self, x: &Vector) -> Vec<f64> {
        let mut out = vec![0.0; self.layout.num_params()];
        for (r, k) in self.layout.segments() {
            out[*k] += x.rows(r.start, r.len()).lp_norm(1);
        }
        out
    }
}

impl Penalty for L1Penalty {
    fn prox_atom(&self, step: f64) -> Arc<dyn ProxAtom> {
        Arc::new(SoftThresholdAtom::new(self.layout.clone(), step))
    }
}

/// Group shrinkage of blocks `(t_i, t_{n+i}, ..., t_{(D-1)n+i})`, `n = len / D`.
pub fn block_soft_threshold(t: &Vector, block_dim: usize, rho: f64) -> Result<Vector> {
    let atom = BlockSoftThresholdAtom::new(0, t.len() / block_dim.max(1), block_dim, 1.0);
    check_len(t.len(), atom.dim(), "block soft-threshold input")?;
    atom.eval(t, &Vector::zeros(0), &ParamVector::scalar(rho)?)
}

/// Input-Jacobian applied to `dir` and the `rho`-Jacobian of
/// [`block_soft_threshold`].
pub fn block_soft_threshold_jacs(t: &Vector, block_dim: usize, rho: f64, dir: &Vector) -> Result<(Vector, Vector)> {
    let atom = BlockSoftThresholdAtom::new(0, t.len() / block_dim.max(1), block_dim, 1.0);
    check_len(t.len(), atom.dim(), "block soft-threshold input")?;
    let lin = atom.linearize(t, &Vector::zeros(0), &ParamVector::scalar(rho)?)?.lin;
    let jr = lin.jac_theta(0).unwrap_or_else(|| Vector::zeros(t.len()));
    Ok((lin.jac_input(dir), jr))
}

/// `Prox_{gamma theta ||.||_{1,2}}` on strided `D`-blocks after an
/// untouched prefix of length `prefix`.
#[derive(Debug, Clone)]
pub struct BlockSoftThresholdAtom {
    prefix: usize,
    groups: usize,
    block_dim: usize,
    step: f64,
}

impl BlockSoftThresholdAtom {
    pub fn new(prefix: usize, groups: usize, block_dim: usize, step: f64) -> Self {
        BlockSoftThresholdAtom {
            prefix,
            groups,
            block_dim,
            step,
        }
    }

    fn index(&self, group: usize, k: usize) -> usize {
        self.prefix + k * self.groups + group
    }
}

struct BlockLin {
    atom: BlockSoftThresholdAtom,
    // Per group: (rho / ||t||, unit direction) on active groups.
    active: Vec<Option<(f64, Vec<f64>)>>,
}

impl Linearization for BlockLin {
    fn jac_input(&self, dir: &Vector) -> Vector {
        let a = &self.atom;
        let mut out = Vector::zeros(dir.len());
        out.rows_mut(0, a.prefix).copy_from(&dir.rows(0, a.prefix));
        for (g, act) in self.active.iter().enumerate() {
            if let Some((ratio, unit)) = act {
                let dot: f64 = (0..a.block_dim).map(|k| dir[a.index(g, k)] * unit[k]).sum();
                for k in 0..a.block_dim {
                    let i = a.index(g, k);
                    out[i] = dir[i] - ratio * (dir[i] - dot * unit[k]);
                }
            }
        }
        out
    }
    fn jac_theta(&self, k: usize) -> Option<Vector> {
        if k != 0 {
            return None;
        }
        let a = &self.atom;
        let mut col = Vector::zeros(a.dim());
        for (g, act) in self.active.iter().enumerate() {
            if let Some((_, unit)) = act {
                for (c, u) in unit.iter().enumerate() {
                    col[a.index(g, c)] = -a.step * u;
                }
            }
        }
        Some(col)
    }
}

impl ProxAtom for BlockSoftThresholdAtom {
    fn dim(&self) -> usize {
        self.prefix + self.groups * self.block_dim
    }

    fn linearize(&self, point: &Vector, _y: &Vector, theta: &ParamVector) -> Result<Linearized> {
        check_len(point.len(), self.dim(), "block soft-threshold input")?;
        check_len(theta.len(), 1, "block soft-threshold parameters")?;
        let rho = self.step * theta.get(0);
        let mut value = point.clone();
        let mut active = Vec::with_capacity(self.groups);
        for g in 0..self.groups {
            let norm = (0..self.block_dim)
                .map(|k| point[self.index(g, k)].powi(2))
                .sum::<f64>()
                .sqrt();
            if norm > rho {
                let unit: Vec<f64> = (0..self.block_dim).map(|k| point[self.index(g, k)] / norm).collect();
                for k in 0..self.block_dim {
                    let i = self.index(g, k);
                    value[i] = if self.block_dim == 1 {
                        st(point[i], rho)
                    } else {
                        point[i] * (1.0 - rho / norm)
                    };
                }
                active.push(Some((rho / norm, unit)));
            } else {
                for k in 0..self.block_dim {
                    value[self.index(g, k)] = 0.0;
                }
                active.push(None);
            }
        }
        Ok(Linearized {
            value,
            lin: Box::new(BlockLin {
                atom: self.clone(),
                active,
            }),
        })
    }
}

/// `theta ||u||_{1,2}` on the strided blocks following a free prefix.
#[derive(Debug, Clone)]
pub struct BlockL12Penalty {
    pub prefix: usize,
    pub groups: usize,
    pub block_dim: usize,
}

impl BlockL12Penalty {
    pub fn regularizer_value(&self, x: &Vector) -> f64 {
        let a = BlockSoftThresholdAtom::new(self.prefix, self.groups, self.block_dim, 1.0);
        (0..self.groups)
            .map(|g| {
                (0..self.block_dim)
                    .map(|k| x[a.index(g, k)].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum()
    }
}

impl Penalty for BlockL12Penalty {
    fn prox_atom(&self, step: f64) -> Arc<dyn ProxAtom> {
        Arc::new(BlockSoftThresholdAtom::new(
            self.prefix,
            self.groups,
            self.block_dim,
            step,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::tests_support::{check_fd_input, check_fd_theta, check_nonexpansive, random_vec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn soft_threshold_examples() {
        let t = Vector::from_vec(vec![3.0, -0.5, -2.0]);
        assert_eq!(soft_threshold(&t, 1.0), Vector::from_vec(vec![2.0, 0.0, -1.0]));
        let (d, j) = soft_threshold_jacs(&t, 1.0);
        assert_eq!(d, Vector::from_vec(vec![1.0, 0.0, 1.0]));
        assert_eq!(j, Vector::from_vec(vec![-1.0, 0.0, 1.0]));
        assert_eq!(soft_threshold(&t, 1e-300), t);
        let (d, j) = soft_threshold_jacs(&Vector::from_vec(vec![0.1, -0.2, 1.0]), 1.0);
        assert_eq!(d.norm(), 0.0);
        assert_eq!(j.norm(), 0.0);
    }

    #[test]
    fn block_examples() {
        let t = Vector::from_vec(vec![3.0, 4.0]);
        let out = block_soft_threshold(&t, 2, 1.0).unwrap();
        assert!((out - Vector::from_vec(vec![2.4, 3.2])).norm() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let t = random_vec(17, &mut rng);
            assert_eq!(block_soft_threshold(&t, 1, 0.7).unwrap(), soft_threshold(&t, 0.7));
        }
    }

    #[test]
    fn multiscale_examples() {
        let band = 3;
        let t = Vector::from_vec((0..12).map(|i| (i as f64 - 5.5) * 0.6).collect());
        let rho = ParamVector::new(vec![1.0, 2.0]).unwrap();
        let (v, _, jac) = multiscale_soft_threshold(&t, band, &rho).unwrap();
        let lo = soft_threshold(&t.rows(0, 6).into_owned(), 1.0);
        let hi = soft_threshold(&t.rows(6, 6).into_owned(), 2.0);
        assert_eq!(v.rows(0, 6), lo.rows(0, 6));
        assert_eq!(v.rows(6, 6), hi.rows(0, 6));
        assert!(jac.view((6, 0), (6, 1)).norm() == 0.0 && jac.view((0, 1), (6, 1)).norm() == 0.0);
        let eq = ParamVector::new(vec![1.5, 1.5]).unwrap();
        assert_eq!(
            multiscale_soft_threshold(&t, band, &eq).unwrap().0,
            soft_threshold(&t, 1.5)
        );
        assert!(multiscale_soft_threshold(&t, 2, &rho).is_err());
    }

    #[test]
    fn threshold_atoms_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let st = SoftThresholdAtom::new(ParamLayout::multiscale(5, 2), 0.8);
        let bst = BlockSoftThresholdAtom::new(3, 6, 2, 0.8);
        let e = Vector::zeros(0);
        for _ in 0..20 {
            let theta =
                ParamVector::new(vec![0.3 + 0.5 * rng.random::<f64>(), 0.4 + 0.5 * rng.random::<f64>()]).unwrap();
            check_fd_input(&st, &random_vec(20, &mut rng), &e, &theta, &mut rng, 1e-5);
            check_fd_theta(&st, &random_vec(20, &mut rng), &e, &theta, 1e-5);
            let th1 = ParamVector::scalar(theta.get(0)).unwrap();
            check_fd_input(&bst, &random_vec(15, &mut rng), &e, &th1, &mut rng, 1e-5);
            check_fd_theta(&bst, &random_vec(15, &mut rng), &e, &th1, 1e-5);
        }
        check_nonexpansive(&st, &e, &ParamVector::new(vec![0.5, 1.0]).unwrap(), &mut rng);
        check_nonexpansive(&bst, &e, &ParamVector::scalar(0.5).unwrap(), &mut rng);
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn soft_threshold_lipschitz_in_rho(
            t in proptest::collection::vec(-5.0f64..5.0, 1..40),
            r1 in 0.01f64..3.0,
            r2 in 0.01f64..3.0,
        ) {
            let t = Vector::from_vec(t);
            let a = soft_threshold(&t, r1);
            let b = soft_threshold(&t, r2);
            for i in 0..t.len() {
                prop_assert!((a[i] - b[i]).abs() <= (r1 - r2).abs() + 1e-12);
            }
            let p = t.len() as f64;
            prop_assert!((a - b).norm() <= p.sqrt() * (r1 - r2).abs() + 1e-12);
        }

        #[test]
        fn block_threshold_lipschitz_in_rho(
            t in proptest::collection::vec(-5.0f64..5.0, 2..40usize).prop_filter("even", |v| v.len() % 2 == 0),
            r1 in 0.01f64..3.0,
            r2 in 0.01f64..3.0,
        ) {
            let t = Vector::from_vec(t);
            let a = block_soft_threshold(&t, 2, r1).unwrap();
            let b = block_soft_threshold(&t, 2, r2).unwrap();
            prop_assert!((a - b).norm() <= (t.len() as f64).sqrt() * (r1 - r2).abs() + 1e-12);
        }
    }
}
