use super::LinearMap;
use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Entry selection `(Phi x)_i = x_{pattern[i]}`; the adjoint zero-fills.
#[derive(Debug, Clone)]
pub struct Mask {
    n: usize,
    pattern: Vec<usize>,
}

/// Builds a masking operator from zero-based indices into `R^n`.
pub fn make_mask(n: usize, pattern: &[usize]) -> Result<Mask> {
    let mut seen = vec![false; n];
    for &i in pattern {
        if i >= n {
            return Err(Error::config(format!("mask index {i} out of range 0..{n}")));
        }
        if seen[i] {
            return Err(Error::config(format!("duplicate mask index {i}")));
        }
        seen[i] = true;
    }
    Ok(Mask {
        n,
        pattern: pattern.to_vec(),
    })
}

impl Mask {
    pub fn pattern(&self) -> &[usize] {
        &self.pattern
    }
}

impl LinearMap for Mask {
    fn in_dim(&self) -> usize {
        self.n
    }
    fn out_dim(&self) -> usize {
        self.pattern.len()
    }
    fn apply(&self, x: &Vector) -> Vector {
        Vector::from_iterator(self.pattern.len(), self.pattern.iter().map(|&i| x[i]))
    }
    fn adjoint(&self, y: &Vector) -> Vector {
        let mut out = Vector::zeros(self.n);
        for (k, &i) in self.pattern.iter().enumerate() {
            out[i] = y[k];
        }
        out
    }
    fn norm_bound(&self) -> f64 {
        1.0
    }
    // Phi Phi^* = Id_P for a selection.
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

    #[test]
    fn selects_and_zero_fills() {
        let m = make_mask(4, &[0, 2]).unwrap();
        let x = Vector::from_vec(vec![5.0, 6.0, 7.0, 8.0]);
        assert_eq!(m.apply(&x).as_slice(), &[5.0, 7.0]);
        let back = m.adjoint(&Vector::from_vec(vec![5.0, 7.0]));
        assert_eq!(back.as_slice(), &[5.0, 0.0, 7.0, 0.0]);
    }

    #[test]
    fn full_pattern_is_identity() {
        let m = make_mask(3, &[0, 1, 2]).unwrap();
        let x = Vector::from_vec(vec![1.0, -2.0, 3.5]);
        assert_eq!(m.apply(&x), x);
    }

    #[test]
    fn rejects_bad_patterns() {
        assert!(matches!(make_mask(3, &[0, 0]), Err(Error::Config(_))));
        assert!(matches!(make_mask(3, &[3]), Err(Error::Config(_))));
    }
}
