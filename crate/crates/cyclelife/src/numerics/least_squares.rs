use super::cholesky::cholesky;
use super::matrix::DenseMatrix;
use super::NumericsError;

/// Minimize `||y - X*b||_2` by normal equations with Cholesky.
///
/// When the design has exactly one constant column (an intercept), the other
/// columns are mean-centered before the solve and the shift is folded back
/// into the constant column's coefficient afterwards; this keeps the normal
/// equations well conditioned for designs like raw cycle numbers against a
/// ones column. Only small systems are solved this way here (k = 2 in the
/// capacity-fade fit), so orthogonal factorizations are not needed.
pub fn solve_lls(x: &DenseMatrix, y: &[f64]) -> Result<Vec<f64>, NumericsError> {
    let (n, k) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(NumericsError::Dimension(format!(
            "{} rows in X but {} observations",
            n,
            y.len()
        )));
    }
    if n < k || k == 0 {
        return Err(NumericsError::Dimension(format!(
            "underdetermined system: {}x{}",
            n, k
        )));
    }

    let constant_cols: Vec<usize> = (0..k)
        .filter(|&j| {
            let col = x.column(j);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in col {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            lo == hi
        })
        .collect();

    // Centering only helps when exactly one constant column can absorb the
    // shift; otherwise fall back to the raw normal equations.
    if constant_cols.len() == 1 && k >= 2 && x.get(0, constant_cols[0]) != 0.0 {
        solve_centered(x, y, constant_cols[0])
    } else {
        solve_normal_equations(x, y)
    }
}

#[allow(clippy::needless_range_loop)]
fn solve_normal_equations(x: &DenseMatrix, y: &[f64]) -> Result<Vec<f64>, NumericsError> {
    let (n, k) = (x.rows(), x.cols());
    let mut gram = DenseMatrix::zeros(k, k);
    let mut rhs = vec![0.0; k];
    for i in 0..n {
        let row = x.row(i);
        for a in 0..k {
            rhs[a] += row[a] * y[i];
            for b in a..k {
                let v = gram.get(a, b) + row[a] * row[b];
                gram.set(a, b, v);
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            gram.set(a, b, gram.get(b, a));
        }
    }
    let max_jitter = 1e-8 * gram.mean_diag().abs().max(1.0);
    let factor = cholesky(&gram, max_jitter).map_err(|_| NumericsError::RankDeficient)?;
    Ok(factor.solve(&rhs))
}

fn solve_centered(x: &DenseMatrix, y: &[f64], const_col: usize) -> Result<Vec<f64>, NumericsError> {
    let (n, k) = (x.rows(), x.cols());
    let const_val = x.get(0, const_col);
    let others: Vec<usize> = (0..k).filter(|&j| j != const_col).collect();

    let means: Vec<f64> = others
        .iter()
        .map(|&j| x.column(j).iter().sum::<f64>() / n as f64)
        .collect();
    let centered = DenseMatrix::from_fn(n, others.len(), |i, a| x.get(i, others[a]) - means[a]);
    let slopes = solve_normal_equations(&centered, y)?;

    let y_mean = y.iter().sum::<f64>() / n as f64;
    let shift: f64 = slopes.iter().zip(&means).map(|(b, m)| b * m).sum();

    let mut out = vec![0.0; k];
    for (a, &j) in others.iter().enumerate() {
        out[j] = slopes[a];
    }
    out[const_col] = (y_mean - shift) / const_val;
    Ok(out)
}
