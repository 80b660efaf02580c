//! Brute-force references used to check the propagated derivatives, the
//! unbiasedness claims and the tuner. Nothing here reuses derivative code
//! from the prox or solver modules.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Outcome of comparing a computed quantity against its reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    pub reference: Vec<f64>,
    pub target: Vec<f64>,
    pub abs_error: f64,
    pub rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    /// Passes when `||target - reference|| <= tolerance * max(||reference||, floor)`.
    pub fn compare(name: impl Into<String>, reference: &[f64], target: &[f64], tolerance: f64, floor: f64) -> Self {
        let abs_error = reference
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = reference.iter().map(|a| a * a).sum::<f64>().sqrt().max(floor);
        let rel_error = if reference.len() == target.len() {
            abs_error / scale
        } else {
            f64::INFINITY
        };
        OracleReport {
            name: name.into(),
            reference: reference.to_vec(),
            target: target.to_vec(),
            abs_error,
            rel_error,
            tolerance,
            pass: rel_error <= tolerance,
        }
    }
}

/// Central-difference Jacobian of `map` at `theta`, one column per entry,
/// with absolute step `step`.
pub fn fd_jacobian_oracle<F>(map: F, theta: &[f64], step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vector> + Sync,
{
    if !(step > 0.0) {
        return Err(Error::config("finite-difference step must be positive"));
    }
    let cols: Vec<Vector> = (0..theta.len())
        .into_par_iter()
        .map(|k| {
            let mut up = theta.to_vec();
            let mut down = theta.to_vec();
            up[k] += step;
            down[k] -= step;
            Ok((map(&up)? - map(&down)?) / (2.0 * step))
        })
        .collect::<Result<_>>()?;
    let rows = cols.first().map_or(0, |c| c.len());
    let mut m = DMatrix::zeros(rows, theta.len());
    for (k, c) in cols.iter().enumerate() {
        m.set_column(k, c);
    }
    Ok(m)
}

/// Relative error of the finite-difference Jacobian against `reference`
/// for each step in `steps` (typically a V-shaped curve).
pub fn fd_step_sweep<F>(map: F, theta: &[f64], reference: &DMatrix<f64>, steps: &[f64]) -> Result<Vec<(f64, f64)>>
where
    F: Fn(&[f64]) -> Result<Vector> + Sync,
{
    steps
        .iter()
        .map(|&h| {
            let fd = fd_jacobian_oracle(&map, theta, h)?;
            Ok((h, (fd - reference).norm() / reference.norm().max(f64::MIN_POSITIVE)))
        })
        .collect()
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub replicates: usize,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        McEstimate {
            mean,
            std_error: (var / n).sqrt(),
            replicates: samples.len(),
        }
    }

    /// `|mean - target| <= k * SE`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error
    }

    /// Distance to `target` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target) / self.std_error
    }
}

/// RNG for replicate `index` of a run seeded with `seed`: one independent
/// ChaCha stream per replicate.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Monte-Carlo mean of `statistic(sampler(rng))`, replicates in parallel,
/// each on its own stream so the result does not depend on scheduling.
pub fn mc_expectation_oracle<S, Samp, Stat>(
    sampler: Samp,
    statistic: Stat,
    replicates: usize,
    seed: u64,
) -> Result<McEstimate>
where
    Samp: Fn(&mut ChaCha8Rng) -> S + Sync,
    Stat: Fn(&S) -> f64 + Sync,
{
    if replicates < 100 {
        return Err(Error::config(format!("need at least 100 replicates, got {replicates}")));
    }
    let samples: Vec<f64> = (0..replicates as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(seed, i);
            statistic(&sampler(&mut rng))
        })
        .collect();
    Ok(McEstimate::from_samples(&samples))
}

/// Log-spaced grid `lo .. hi` with `points` nodes.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1).max(1) as f64).exp())
        .collect()
}

/// Exhaustive search over a log grid. Returns the best node and the table.
pub fn grid_search_oracle<F>(objective: F, lo: f64, hi: f64, points: usize) -> Result<(f64, Vec<(f64, f64)>)>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if points < 10 || !(lo > 0.0) || !(hi > lo) {
        return Err(Error::config("grid search needs >= 10 points on 0 < lo < hi"));
    }
    let table: Vec<(f64, f64)> = log_grid(lo, hi, points)
        .into_par_iter()
        .map(|l| Ok((l, objective(l)?)))
        .collect::<Result<_>>()?;
    let best = table
        .iter()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::numerical("objective not finite anywhere on the grid"))?;
    Ok((best.0, table))
}

/// Exact trace of a linear map given by its action, from the canonical basis.
pub fn direct_trace<F>(apply: F, dim: usize) -> f64
where
    F: Fn(&Vector) -> Vector,
{
    let mut e = Vector::zeros(dim);
    let mut t = 0.0;
    for i in 0..dim {
        e[i] = 1.0;
        t += apply(&e)[i];
        e[i] = 0.0;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::{soft_threshold, soft_threshold_jacs};
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn fd_is_exact_on_affine_maps() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 3.0, 0.0]);
        let map = |t: &[f64]| Ok(&a * Vector::from_column_slice(t) + Vector::from_element(3, 1.0));
        for &h in &[1e-1, 1e-3, 10.0] {
            let j = fd_jacobian_oracle(map, &[0.3, -2.0], h).unwrap();
            assert!((j - &a).norm() < 1e-9);
        }
    }

    #[test]
    fn fd_matches_soft_threshold_rho_jacobian() {
        let t = Vector::from_vec(vec![3.0, -0.5, -2.0, 1.7]);
        let map = |r: &[f64]| Ok(soft_threshold(&t, r[0]));
        let j = fd_jacobian_oracle(map, &[1.0], 1e-5).unwrap();
        let expected = soft_threshold_jacs(&t, 1.0).1;
        assert!((j.column(0) - expected).norm() < 1e-9);
        let sweep = fd_step_sweep(
            |r: &[f64]| Ok(Vector::from_element(1, r[0].sin())),
            &[0.7],
            &DMatrix::from_element(1, 1, 0.7f64.cos()),
            &[1e-3, 1e-5, 1e-7],
        )
        .unwrap();
        assert!(sweep[1].1 < sweep[0].1);
    }

    #[test]
    fn mc_oracle_chi_square_mean_and_determinism() {
        let p = 20;
        let sigma = 1.5;
        let sampler = |rng: &mut ChaCha8Rng| Vector::from_fn(p, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
        let est = mc_expectation_oracle(sampler, |w: &Vector| w.norm_squared(), 2000, 17).unwrap();
        assert!(est.within(p as f64 * sigma * sigma, 3.0), "{est:?}");
        let again = mc_expectation_oracle(sampler, |w: &Vector| w.norm_squared(), 2000, 17).unwrap();
        assert_eq!(est.mean.to_bits(), again.mean.to_bits());
        assert!(mc_expectation_oracle(sampler, |w: &Vector| w.norm_squared(), 10, 17).is_err());
    }

    #[test]
    fn grid_brackets_convex_minimum() {
        let (best, table) = grid_search_oracle(|l| Ok((l.ln() - 0.3f64.ln()).powi(2)), 0.01, 10.0, 31).unwrap();
        assert_eq!(table.len(), 31);
        let ratio = (10.0f64 / 0.01).powf(1.0 / 30.0);
        assert!(best / 0.3 < ratio && 0.3 / best < ratio);
    }

    #[test]
    fn direct_trace_of_matrix() {
        let m = DMatrix::from_fn(5, 5, |i, j| (i * 5 + j) as f64);
        assert_eq!(direct_trace(|v| &m * v, 5), m.trace());
    }
}
