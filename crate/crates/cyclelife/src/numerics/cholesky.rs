use super::matrix::DenseMatrix;
use super::NumericsError;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix,
/// possibly regularized by a recorded diagonal jitter.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    l: DenseMatrix,
    jitter_used: f64,
}

/// Factor `a + jitter*I = L*L^T`, escalating jitter by factors of ten from
/// `1e-10 * mean(diag(a))` up to `max_jitter` until the factorization
/// succeeds. The first attempt uses no jitter at all.
pub fn cholesky(a: &DenseMatrix, max_jitter: f64) -> Result<CholeskyFactor, NumericsError> {
    if a.rows() != a.cols() {
        return Err(NumericsError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let sym_tol = 1e-10 * a.max_abs().max(1.0);
    if !a.is_symmetric(sym_tol) {
        return Err(NumericsError::NotSymmetric);
    }

    if let Some(l) = try_factor(a, 0.0) {
        return Ok(CholeskyFactor {
            l,
            jitter_used: 0.0,
        });
    }
    let base = 1e-10 * a.mean_diag().abs().max(f64::MIN_POSITIVE);
    let mut jitter = base;
    while jitter <= max_jitter && jitter.is_finite() {
        if let Some(l) = try_factor(a, jitter) {
            return Ok(CholeskyFactor {
                l,
                jitter_used: jitter,
            });
        }
        jitter *= 10.0;
    }
    Err(NumericsError::NotPositiveDefinite { max_jitter })
}

fn try_factor(a: &DenseMatrix, jitter: f64) -> Option<DenseMatrix> {
    let n = a.rows();
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j) + jitter;
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let ljj = d.sqrt();
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    Some(l)
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn lower(&self) -> &DenseMatrix {
        &self.l
    }

    /// Solve `L*v = b` (forward substitution).
    #[allow(clippy::needless_range_loop)]
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut v = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l.get(i, k) * v[k];
            }
            v[i] = s / self.l.get(i, i);
        }
        v
    }

    /// Solve `(L*L^T)*x = b`.
    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = self.solve_lower(b);
        // back substitution on L^T
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l.get(k, i) * x[k];
            }
            x[i] = s / self.l.get(i, i);
        }
        x
    }

    /// Inverse of the factored matrix, column by column.
    #[allow(clippy::needless_range_loop)]
    pub fn inverse(&self) -> DenseMatrix {
        let n = self.dim();
        let mut inv = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.solve(&e);
            e[j] = 0.0;
            for i in 0..n {
                inv.set(i, j, col[i]);
            }
        }
        inv
    }

    /// `ln|A + jitter*I|` of the factored matrix.
    pub fn log_det(&self) -> f64 {
        (0..self.dim()).map(|i| self.l.get(i, i).ln()).sum::<f64>() * 2.0
    }

    /// `L*L^T`, for reconstruction checks.
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.dim();
        DenseMatrix::from_fn(n, n, |i, j| {
            (0..=i.min(j))
                .map(|k| self.l.get(i, k) * self.l.get(j, k))
                .sum()
        })
    }
}
