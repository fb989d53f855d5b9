//! Tridiagonal matrices and the Thomas algorithm.

use crate::error::{check_len, Error, Result};

/// Square tridiagonal matrix stored by diagonals.
///
/// `lower[0]` and `upper[n - 1]` are unused and kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        m.diag.fill(1.0);
        m
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if j + 1 == i {
            self.lower[i]
        } else if i + 1 == j {
            self.upper[i]
        } else {
            0.0
        }
    }

    pub fn transpose(&self) -> Self {
        let n = self.len();
        let mut t = Self::zeros(n);
        t.diag.copy_from_slice(&self.diag);
        for i in 1..n {
            t.lower[i] = self.upper[i - 1];
            t.upper[i - 1] = self.lower[i];
        }
        t
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            lower: self.lower.iter().map(|v| v * s).collect(),
            diag: self.diag.iter().map(|v| v * s).collect(),
            upper: self.upper.iter().map(|v| v * s).collect(),
        }
    }

    /// `alpha * I + beta * self`
    pub fn shifted(&self, alpha: f64, beta: f64) -> Self {
        Self {
            lower: self.lower.iter().map(|v| beta * v).collect(),
            diag: self.diag.iter().map(|v| alpha + beta * v).collect(),
            upper: self.upper.iter().map(|v| beta * v).collect(),
        }
    }

    /// `y = A x`
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(y.len(), n);
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                v += self.upper[i] * x[i + 1];
            }
            y[i] = v;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.lower
            .iter()
            .chain(&self.diag)
            .chain(&self.upper)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Solves `A x = rhs` by Thomas elimination without pivoting.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        check_len("tridiagonal solve", n, rhs.len())?;
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut pivot = self.diag[0];
        check_pivot(pivot, 0)?;
        c[0] = self.upper[0] / pivot;
        d[0] = rhs[0] / pivot;
        for i in 1..n {
            pivot = self.diag[i] - self.lower[i] * c[i - 1];
            check_pivot(pivot, i)?;
            c[i] = if i + 1 < n {
                self.upper[i] / pivot
            } else {
                0.0
            };
            d[i] = (rhs[i] - self.lower[i] * d[i - 1]) / pivot;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        Ok(d)
    }
}

fn check_pivot(p: f64, row: usize) -> Result<()> {
    if p.is_finite() && p.abs() > f64::MIN_POSITIVE * 1e8 {
        Ok(())
    } else {
        Err(Error::SolverFailure(format!(
            "zero or non-finite pivot {p:e} in row {row}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tridiagonal {
        Tridiagonal {
            lower: vec![0.0, -1.0, 0.5, -2.0],
            diag: vec![4.0, 5.0, 6.0, 7.0],
            upper: vec![1.0, 2.0, -1.0, 0.0],
        }
    }

    #[test]
    fn solve_recovers_known_vector() {
        let a = sample();
        let x = vec![1.0, -2.0, 3.0, 0.5];
        let b = a.apply(&x);
        let y = a.solve(&b).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn transpose_matches_dense() {
        let a = sample();
        let t = a.transpose();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(a.get(i, j), t.get(j, i));
            }
        }
        let x = [0.3, 1.0, -0.7, 2.0];
        let y = [1.5, -0.2, 0.4, 0.9];
        let lhs: f64 = a.apply(&x).iter().zip(&y).map(|(p, q)| p * q).sum();
        let rhs: f64 = x.iter().zip(&t.apply(&y)).map(|(p, q)| p * q).sum();
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn singular_system_is_reported() {
        let a = Tridiagonal {
            lower: vec![0.0, 1.0],
            diag: vec![1.0, 1.0],
            upper: vec![1.0, 0.0],
        };
        assert!(matches!(a.solve(&[1.0, 1.0]), Err(Error::SolverFailure(_))));
        assert!(a.solve(&[1.0]).is_err());
    }

    #[test]
    fn one_by_one() {
        let a = Tridiagonal {
            lower: vec![0.0],
            diag: vec![2.0],
            upper: vec![0.0],
        };
        assert_eq!(a.solve(&[3.0]).unwrap(), vec![1.5]);
    }
}
