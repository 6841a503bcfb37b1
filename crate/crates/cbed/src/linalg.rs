//! Dense Cholesky helpers for the small SPD systems that show up in GP
//! prediction and conjugate linear-regression posteriors. Matrices here are
//! tiny (at most a few dozen rows), so a plain row-major `Vec<f64>` is fine.

/// Lower-triangular Cholesky factor of an SPD matrix.
pub(crate) struct Chol {
    n: usize,
    l: Vec<f64>,
}

impl Chol {
    /// Factor `a` (row-major, n x n). Returns None if a non-positive pivot
    /// shows up, i.e. the matrix is not numerically positive definite.
    pub fn new(a: &[f64], n: usize) -> Option<Chol> {
        assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= 0.0 {
                        return None;
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Chol { n, l })
    }

    /// Solve A x = b via the factorization.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let y = self.solve_lower(b);
        self.solve_lower_t(&y)
    }

    /// Solve L y = b (forward substitution).
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }

    /// Solve L^T x = y (back substitution).
    pub fn solve_lower_t(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }
}

/// Factor with escalating diagonal jitter. Normal-equation matrices can be
/// singular (constant regressors, duplicated rows); the first jitter that
/// produces an SPD factorization wins.
pub(crate) fn chol_jittered(a: &[f64], n: usize) -> Chol {
    if let Some(c) = Chol::new(a, n) {
        return c;
    }
    let mut jitter = 1e-10;
    loop {
        let mut b = a.to_vec();
        for i in 0..n {
            b[i * n + i] += jitter;
        }
        if let Some(c) = Chol::new(&b, n) {
            return c;
        }
        jitter *= 100.0;
        assert!(jitter < 1e3, "matrix not factorable even with large jitter");
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_spd_system() {
        // A = [[4,2],[2,3]], b = [1,2]; x = A^{-1} b = [-1/8, 3/4]
        let a = [4.0, 2.0, 2.0, 3.0];
        let c = Chol::new(&a, 2).unwrap();
        let x = c.solve(&[1.0, 2.0]);
        assert!((x[0] + 0.125).abs() < 1e-12);
        assert!((x[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let a = [1.0, 2.0, 2.0, 1.0];
        assert!(Chol::new(&a, 2).is_none());
    }

    #[test]
    fn jitter_recovers_singular_matrix() {
        let a = [1.0, 1.0, 1.0, 1.0];
        let c = chol_jittered(&a, 2);
        let x = c.solve(&[2.0, 2.0]);
        assert!(x.iter().all(|v| v.is_finite()));
    }
}
