//! Dense linear algebra and unconstrained minimization shared by the
//! regression modules: Cholesky factorization with jitter escalation,
//! triangular solves, ordinary least squares via normal equations,
//! trapezoidal quadrature, and a quasi-Newton minimizer.

mod cholesky;
mod least_squares;
mod matrix;
mod minimize;

pub use cholesky::{cholesky, CholeskyFactor};
pub use least_squares::solve_lls;
pub use matrix::DenseMatrix;
pub use minimize::{minimize, MinimizeResult, MinimizerConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric within tolerance")]
    NotSymmetric,
    #[error("matrix is not positive definite within max jitter {max_jitter:e}")]
    NotPositiveDefinite { max_jitter: f64 },
    #[error("least-squares system is rank deficient beyond jitter rescue")]
    RankDeficient,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("objective returned a non-finite value at the starting point")]
    NonFiniteObjective,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Trapezoidal integral of `y` against abscissa `x`.
///
/// `x` must be strictly monotone; panics on length mismatch or fewer than
/// two points, which callers guard against.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(
        x.len(),
        y.len(),
        "trapezoid: abscissa/ordinate length mismatch"
    );
    assert!(x.len() >= 2, "trapezoid: need at least two points");
    let mut acc = 0.0;
    for i in 1..x.len() {
        acc += (x[i] - x[i - 1]) * (y[i] + y[i - 1]) * 0.5;
    }
    acc
}
