//! Tridiagonal systems and the Thomas algorithm.

/// Row `i` reads `lower[i]·x[i-1] + diag[i]·x[i] + upper[i]·x[i+1]`;
/// `lower[0]` and `upper[n-1]` are ignored.
#[derive(Debug, Clone, Default)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    scratch: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
            scratch: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `out = A·x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.len();
        debug_assert!(x.len() == n && out.len() == n);
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                s += self.upper[i] * x[i + 1];
            }
            out[i] = s;
        }
    }

    /// Solves `A·x = rhs` in place. No pivoting: callers supply diagonally
    /// dominant matrices.
    pub fn solve_in_place(&mut self, rhs: &mut [f64]) {
        let n = self.len();
        assert_eq!(rhs.len(), n, "tridiagonal size mismatch");
        if n == 0 {
            return;
        }
        let c = &mut self.scratch;
        c.resize(n, 0.0);
        let mut denom = self.diag[0];
        c[0] = if n > 1 { self.upper[0] / denom } else { 0.0 };
        rhs[0] /= denom;
        for i in 1..n {
            denom = self.diag[i] - self.lower[i] * c[i - 1];
            c[i] = if i + 1 < n {
                self.upper[i] / denom
            } else {
                0.0
            };
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= c[i] * rhs[i + 1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_dense_check() {
        let n = 7;
        let mut a = Tridiagonal::zeros(n);
        for i in 0..n {
            a.lower[i] = -1.0 + 0.1 * i as f64;
            a.diag[i] = 4.0 + i as f64;
            a.upper[i] = -0.5;
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 0.3).collect();
        let mut b = vec![0.0; n];
        a.apply(&x, &mut b);
        a.solve_in_place(&mut b);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-13);
        }
    }

    #[test]
    fn single_unknown() {
        let mut a = Tridiagonal::zeros(1);
        a.diag[0] = 2.0;
        let mut b = vec![3.0];
        a.solve_in_place(&mut b);
        assert_eq!(b[0], 1.5);
    }
}
