use super::LinearMap;
use crate::error::{Error, Result};
use crate::linalg::{Fft2, Vector};

/// Unit-energy Daubechies 4-tap low-pass filter and its quadrature-mirror
/// high-pass partner.
pub fn daubechies4() -> ([f64; 4], [f64; 4]) {
    let s3 = 3f64.sqrt();
    let norm = 4.0 * 2f64.sqrt();
    let lo = [
        (1.0 + s3) / norm,
        (3.0 + s3) / norm,
        (3.0 - s3) / norm,
        (1.0 - s3) / norm,
    ];
    let hi = [lo[3], -lo[2], lo[1], -lo[0]];
    (lo, hi)
}

/// Undecimated (à trous) two-orientation wavelet analysis with periodic
/// boundary.
///
/// Output layout: `[h_1, v_1, h_2, v_2, ..., h_J, v_J]`, each band of size
/// `N = n1 * n2`. `h_j` is high-pass along rows (horizontal axis) after a
/// vertical low-pass; `v_j` the transposed combination.
#[derive(Debug, Clone)]
pub struct UndecimatedWavelet {
    n1: usize,
    n2: usize,
    scales: usize,
    lo: [f64; 4],
    hi: [f64; 4],
    norm: f64,
}

pub fn make_undecimated_wavelet(n1: usize, n2: usize, scales: usize) -> Result<UndecimatedWavelet> {
    if scales == 0 {
        return Err(Error::config("wavelet transform needs at least one scale"));
    }
    let support = 4usize << (scales - 1);
    if n1 < support || n2 < support {
        return Err(Error::config(format!(
            "image {n1}x{n2} too small for {scales} scales (needs sides >= {support})"
        )));
    }
    let (lo, hi) = daubechies4();
    let mut w = UndecimatedWavelet {
        n1,
        n2,
        scales,
        lo,
        hi,
        norm: 0.0,
    };
    w.norm = w.exact_norm() * (1.0 + 1e-12);
    Ok(w)
}

// Periodic dilated filtering along one axis: out[n] = sum_k f_k a[n - k d].
fn filter_axis(a: &[f64], n1: usize, n2: usize, f: &[f64; 4], d: usize, rows: bool, adjoint: bool) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for i in 0..n1 {
        for j in 0..n2 {
            let mut acc = 0.0;
            for (k, &fk) in f.iter().enumerate() {
                let off = k * d;
                let src = if rows {
                    let jj = if adjoint {
                        (j + off) % n2
                    } else {
                        (j + n2 - off % n2) % n2
                    };
                    i * n2 + jj
                } else {
                    let ii = if adjoint {
                        (i + off) % n1
                    } else {
                        (i + n1 - off % n1) % n1
                    };
                    ii * n2 + j
                };
                acc += fk * a[src];
            }
            out[i * n2 + j] = acc;
        }
    }
    out
}

impl UndecimatedWavelet {
    pub fn scales(&self) -> usize {
        self.scales
    }

    pub fn band_len(&self) -> usize {
        self.n1 * self.n2
    }

    fn rows(&self, a: &[f64], f: &[f64; 4], d: usize, adj: bool) -> Vec<f64> {
        filter_axis(a, self.n1, self.n2, f, d, true, adj)
    }

    fn cols(&self, a: &[f64], f: &[f64; 4], d: usize, adj: bool) -> Vec<f64> {
        filter_axis(a, self.n1, self.n2, f, d, false, adj)
    }

    // Max over frequencies of the summed band power: exact for stacked
    // circulant operators.
    fn exact_norm(&self) -> f64 {
        let n = self.n1 * self.n2;
        let mut delta = Vector::zeros(n);
        delta[0] = 1.0;
        let bands = self.apply(&delta);
        let fft = Fft2::new(self.n1, self.n2);
        let mut power = vec![0.0; n];
        for b in 0..2 * self.scales {
            let spec = fft.forward_real(&bands.as_slice()[b * n..(b + 1) * n]);
            for (p, s) in power.iter_mut().zip(&spec) {
                *p += s.norm_sqr();
            }
        }
        power.into_iter().fold(0.0, f64::max).sqrt()
    }
}

impl LinearMap for UndecimatedWavelet {
    fn in_dim(&self) -> usize {
        self.n1 * self.n2
    }
    fn out_dim(&self) -> usize {
        2 * self.scales * self.n1 * self.n2
    }
    fn apply(&self, x: &Vector) -> Vector {
        let n = self.n1 * self.n2;
        let mut out = Vector::zeros(self.out_dim());
        let mut approx = x.as_slice().to_vec();
        for j in 0..self.scales {
            let d = 1 << j;
            let low_v = self.cols(&approx, &self.lo, d, false);
            let high_v = self.cols(&approx, &self.hi, d, false);
            let h = self.rows(&low_v, &self.hi, d, false);
            let v = self.rows(&high_v, &self.lo, d, false);
            out.as_mut_slice()[2 * j * n..(2 * j + 1) * n].copy_from_slice(&h);
            out.as_mut_slice()[(2 * j + 1) * n..(2 * j + 2) * n].copy_from_slice(&v);
            approx = self.rows(&low_v, &self.lo, d, false);
        }
        out
    }
    fn adjoint(&self, y: &Vector) -> Vector {
        let n = self.n1 * self.n2;
        let mut g_approx = vec![0.0; n];
        for j in (0..self.scales).rev() {
            let d = 1 << j;
            let h = &y.as_slice()[2 * j * n..(2 * j + 1) * n];
            let v = &y.as_slice()[(2 * j + 1) * n..(2 * j + 2) * n];
            let mut g_low_v = self.rows(&g_approx, &self.lo, d, true);
            for (a, b) in g_low_v.iter_mut().zip(self.rows(h, &self.hi, d, true)) {
                *a += b;
            }
            let g_high_v = self.rows(v, &self.lo, d, true);
            g_approx = self.cols(&g_low_v, &self.lo, d, true);
            for (a, b) in g_approx.iter_mut().zip(self.cols(&g_high_v, &self.hi, d, true)) {
                *a += b;
            }
        }
        Vector::from_vec(g_approx)
    }
    fn norm_bound(&self) -> f64 {
        self.norm
    }
}
