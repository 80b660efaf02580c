use std::f64::consts::PI;

use rand::Rng;
use rustfft::num_complex::Complex64;

use super::LinearMap;
use crate::error::{check_len, Error, Result};
use crate::linalg::{Fft2, Vector};

/// Wrapped squared distance of grid index `(i, j)` to the origin.
fn wrapped_sq(i: usize, j: usize, n1: usize, n2: usize) -> (f64, f64) {
    let di = i.min(n1 - i) as f64;
    let dj = j.min(n2 - j) as f64;
    (di, dj)
}

/// Normalized Gaussian kernel of standard deviation `std` centred on pixel
/// `(0, 0)` with periodic wrap-around.
pub fn gaussian_kernel(n1: usize, n2: usize, std: f64) -> Vec<f64> {
    let mut k: Vec<f64> = (0..n1 * n2)
        .map(|idx| {
            let (di, dj) = wrapped_sq(idx / n2, idx % n2, n1, n2);
            (-(di * di + dj * dj) / (2.0 * std * std)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Keeps the `keep_fraction` lowest radial frequencies of an `n1 x n2` grid.
/// The mask is symmetric under `k -> -k`, so filtered real signals stay real.
pub fn lowpass_frequency_mask(n1: usize, n2: usize, keep_fraction: f64) -> Vec<bool> {
    let radius: Vec<f64> = (0..n1 * n2)
        .map(|idx| {
            let (fi, fj) = wrapped_sq(idx / n2, idx % n2, n1, n2);
            (fi / n1 as f64).powi(2) + (fj / n2 as f64).powi(2)
        })
        .collect();
    let mut sorted = radius.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let keep = ((keep_fraction * (n1 * n2) as f64).round() as usize).clamp(1, n1 * n2);
    let cut = sorted[keep - 1];
    radius.iter().map(|&r| r <= cut).collect()
}

/// Periodic convolution `x -> Re(F^-1(mask . F(kernel) . F(x)))`.
#[derive(Debug, Clone)]
pub struct PeriodicConvolution {
    n1: usize,
    n2: usize,
    fft: Fft2,
    spectrum: Vec<Complex64>,
    norm: f64,
}

pub fn make_periodic_convolution(
    n1: usize,
    n2: usize,
    kernel: &[f64],
    freq_mask: &[bool],
) -> Result<PeriodicConvolution> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::config("convolution grid must be non-empty"));
    }
    check_len(kernel.len(), n1 * n2, "convolution kernel")?;
    check_len(freq_mask.len(), n1 * n2, "convolution frequency mask")?;
    let fft = Fft2::new(n1, n2);
    let mut spectrum = fft.forward_real(kernel);
    for (s, &keep) in spectrum.iter_mut().zip(freq_mask) {
        if !keep {
            *s = Complex64::new(0.0, 0.0);
        }
    }
    let norm = spectrum.iter().map(|s| s.norm()).fold(0.0, f64::max);
    Ok(PeriodicConvolution {
        n1,
        n2,
        fft,
        spectrum,
        norm: norm * (1.0 + 1e-12),
    })
}

impl PeriodicConvolution {
    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    fn power(&self, k: usize) -> f64 {
        self.spectrum[k].norm_sqr()
    }

    fn power_cut(&self, rel_tol: f64) -> f64 {
        rel_tol * self.spectrum.iter().map(|s| s.norm_sqr()).fold(0.0, f64::max)
    }
}

impl LinearMap for PeriodicConvolution {
    fn in_dim(&self) -> usize {
        self.n1 * self.n2
    }
    fn out_dim(&self) -> usize {
        self.n1 * self.n2
    }
    fn apply(&self, x: &Vector) -> Vector {
        Vector::from_vec(self.fft.filter(x.as_slice(), |k| self.spectrum[k]))
    }
    fn adjoint(&self, y: &Vector) -> Vector {
        Vector::from_vec(self.fft.filter(y.as_slice(), |k| self.spectrum[k].conj()))
    }
    fn norm_bound(&self) -> f64 {
        self.norm
    }
    fn solve_shifted_gram(&self, shift: f64, scale: f64, rhs: &Vector) -> Option<Vector> {
        Some(Vector::from_vec(self.fft.filter(rhs.as_slice(), |k| {
            Complex64::new(1.0 / (shift + scale * self.power(k)), 0.0)
        })))
    }
    fn gram_pinv(&self, rhs: &Vector, rel_tol: f64) -> Option<Vector> {
        let cut = self.power_cut(rel_tol);
        Some(Vector::from_vec(self.fft.filter(rhs.as_slice(), |k| {
            let p = self.power(k);
            Complex64::new(if p > cut { 1.0 / p } else { 0.0 }, 0.0)
        })))
    }
    fn gram_pinv_trace(&self, rel_tol: f64) -> Option<f64> {
        let cut = self.power_cut(rel_tol);
        Some(
            (0..self.spectrum.len())
                .map(|k| self.power(k))
                .filter(|&p| p > cut)
                .map(|p| 1.0 / p)
                .sum(),
        )
    }
    fn gram_rank(&self, rel_tol: f64) -> Option<usize> {
        let cut = self.power_cut(rel_tol);
        Some((0..self.spectrum.len()).filter(|&k| self.power(k) > cut).count())
    }
}

/// Random sub-sampling of a random orthogonal periodic convolution
/// (unit-modulus spectrum with random phases). Since the convolution is
/// orthogonal, `Phi Phi^* = Id_P`.
#[derive(Debug, Clone)]
pub struct RandomSensing {
    n1: usize,
    n2: usize,
    fft: Fft2,
    phases: Vec<Complex64>,
    pattern: Vec<usize>,
}

pub fn make_random_sensing<R: Rng + ?Sized>(n1: usize, n2: usize, ratio: f64, rng: &mut R) -> Result<RandomSensing> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::config(format!("sensing ratio {ratio} not in (0, 1]")));
    }
    let n = n1 * n2;
    if n == 0 {
        return Err(Error::config("sensing grid must be non-empty"));
    }
    let mut phases = vec![Complex64::new(0.0, 0.0); n];
    let mut assigned = vec![false; n];
    for idx in 0..n {
        if assigned[idx] {
            continue;
        }
        let (i, j) = (idx / n2, idx % n2);
        let mirror = ((n1 - i) % n1) * n2 + (n2 - j) % n2;
        if mirror == idx {
            phases[idx] = Complex64::new(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0);
        } else {
            let angle = 2.0 * PI * rng.random::<f64>();
            phases[idx] = Complex64::from_polar(1.0, angle);
            phases[mirror] = phases[idx].conj();
            assigned[mirror] = true;
        }
        assigned[idx] = true;
    }
    let p = ((ratio * n as f64).round() as usize).clamp(1, n);
    let mut pattern = rand::seq::index::sample(rng, n, p).into_vec();
    pattern.sort_unstable();
    Ok(RandomSensing {
        n1,
        n2,
        fft: Fft2::new(n1, n2),
        phases,
        pattern,
    })
}

impl LinearMap for RandomSensing {
    fn in_dim(&self) -> usize {
        self.n1 * self.n2
    }
    fn out_dim(&self) -> usize {
        self.pattern.len()
    }
    fn apply(&self, x: &Vector) -> Vector {
        let full = self.fft.filter(x.as_slice(), |k| self.phases[k]);
        Vector::from_iterator(self.pattern.len(), self.pattern.iter().map(|&i| full[i]))
    }
    fn adjoint(&self, y: &Vector) -> Vector {
        let mut filled = vec![0.0; self.n1 * self.n2];
        for (k, &i) in self.pattern.iter().enumerate() {
            filled[i] = y[k];
        }
        Vector::from_vec(self.fft.filter(&filled, |k| self.phases[k].conj()))
    }
    fn norm_bound(&self) -> f64 {
        1.0 + 1e-12
    }
    fn solve_shifted_gram(&self, shift: f64, scale: f64, rhs: &Vector) -> Option<Vector> {
        Some(rhs / (shift + scale))
    }
    fn gram_pinv(&self, rhs: &Vector, _rel_tol: f64) -> Option<Vector> {
        Some(rhs.clone())
    }
    fn gram_pinv_trace(&self, _rel_tol: f64) -> Option<f64> {
        Some(self.pattern.len() as f64)
    }
    fn gram_rank(&self, _rel_tol: f64) -> Option<usize> {
        Some(self.pattern.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn delta_kernel_is_identity() {
        let mut delta = vec![0.0; 6 * 5];
        delta[0] = 1.0;
        let c = make_periodic_convolution(6, 5, &delta, &vec![true; 30]).unwrap();
        let x = Vector::from_fn(30, |i, _| (i as f64).cos());
        assert!((c.apply(&x) - &x).norm() < 1e-12);
    }

    #[test]
    fn masked_spectrum_is_exactly_zero_outside_mask() {
        let (n1, n2) = (32, 32);
        let mask = lowpass_frequency_mask(n1, n2, 0.2);
        let kept = mask.iter().filter(|&&m| m).count() as f64 / (n1 * n2) as f64;
        assert!((kept - 0.2).abs() < 0.02, "kept fraction {kept}");
        let c = make_periodic_convolution(n1, n2, &gaussian_kernel(n1, n2, 2.0), &mask).unwrap();
        for (s, &m) in c.spectrum().iter().zip(&mask) {
            if !m {
                assert_eq!(s.norm(), 0.0);
            }
        }
    }

    #[test]
    fn commutes_with_circular_shift() {
        let (n1, n2) = (8, 8);
        let c = make_periodic_convolution(n1, n2, &gaussian_kernel(n1, n2, 1.5), &vec![true; 64]).unwrap();
        let x = Vector::from_fn(64, |i, _| ((i * 7 % 13) as f64).sin());
        let shift = |v: &Vector| {
            Vector::from_fn(64, |idx, _| {
                let (i, j) = (idx / n2, idx % n2);
                v[((i + n1 - 1) % n1) * n2 + (j + n2 - 2) % n2]
            })
        };
        assert!((c.apply(&shift(&x)) - shift(&c.apply(&x))).norm() < 1e-12);
    }

    #[test]
    fn random_sensing_has_orthonormal_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = make_random_sensing(8, 6, 0.5, &mut rng).unwrap();
        assert_eq!(s.out_dim(), 24);
        let y = Vector::from_fn(24, |i, _| 1.0 + i as f64);
        let back = s.apply(&s.adjoint(&y));
        assert!((back - y).norm() < 1e-10);
    }
}
