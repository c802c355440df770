//! Elastic net regression by cyclic coordinate descent.
//!
//! The objective on standardized columns `xs` and centered targets `yc` is
//!
//! ```text
//! (1/(2n)) ||yc - xs w||^2 + lambda * ( (1-alpha)/2 ||w||^2 + alpha ||w||_1 )
//! ```
//!
//! with the coordinate update `w_j <- S(rho_j, lambda alpha) / (1 + lambda (1-alpha))`
//! where `rho_j = (1/n) x_j' (residual + x_j w_j)` and `S` is soft
//! thresholding. The penalty grid runs log-spaced down from
//! `lambda_max = max_j |x_j' yc| / (n alpha)` (the smallest penalty that
//! zeroes every coefficient), and the reported penalty is selected by k-fold
//! cross validation at minimum held-out mean squared error, ties going to the
//! stronger penalty.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::DenseMatrix;

#[derive(Debug, Error)]
pub enum EnrError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("column {0} is constant (zero variance)")]
    ZeroVarianceColumn(usize),
    #[error("every column is constant; nothing to fit")]
    AllColumnsConstant,
    #[error("coordinate descent did not converge within {passes} passes")]
    NonConvergence {
        passes: usize,
        coefficients: Vec<f64>,
    },
    #[error("lambda_max is zero (targets have no signal)")]
    ZeroLambdaMax,
    #[error("{rows} rows cannot fill {folds} folds with at least 2 rows each")]
    FoldTooSmall { rows: usize, folds: usize },
    #[error("all coefficients are zero; weights undefined")]
    AllZeroCoefficients,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model document: {0}")]
    Document(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnrConfig {
    /// L1/L2 mixing in (0, 1]; 0.5 matches the reference analysis.
    pub alpha: f64,
    pub n_lambda: usize,
    /// `lambda_min / lambda_max` for the log-spaced grid.
    pub lambda_ratio: f64,
    pub folds: usize,
    /// Convergence threshold on the largest coefficient change in one pass.
    pub tolerance: f64,
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for EnrConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            n_lambda: 100,
            lambda_ratio: 1e-4,
            folds: 4,
            tolerance: 1e-7,
            max_passes: 100_000,
            seed: 0,
        }
    }
}

impl EnrConfig {
    fn check(&self) -> Result<(), EnrError> {
        let alpha_ok = self.alpha > 0.0 && self.alpha <= 1.0;
        if !alpha_ok {
            return Err(EnrError::InvalidConfig(format!(
                "alpha {} not in (0, 1]",
                self.alpha
            )));
        }
        if self.folds < 2 {
            return Err(EnrError::InvalidConfig("need at least 2 folds".into()));
        }
        if self.n_lambda == 0 {
            return Err(EnrError::InvalidConfig("need at least 1 path point".into()));
        }
        if self.tolerance <= 0.0 || self.tolerance.is_nan() {
            return Err(EnrError::InvalidConfig("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Fitted model, stored against raw (unstandardized) feature columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrModel {
    pub intercept: f64,
    /// Coefficients on standardized columns, zero for dropped columns.
    pub coefficients: Vec<f64>,
    pub lambda_selected: f64,
    pub alpha: f64,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    /// Constant columns removed before fitting (reported as zero weight).
    pub dropped_columns: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct EnrModelDoc {
    schema: String,
    intercept: f64,
    coefficients: Vec<f64>,
    lambda: f64,
    alpha: f64,
    feature_means: Vec<f64>,
    feature_stds: Vec<f64>,
    dropped_columns: Vec<usize>,
}

/// Cross-validation trace over the shared penalty grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    pub mse_mean: Vec<f64>,
    pub mse_std: Vec<f64>,
    pub index_min_mse: usize,
    pub fold_assignment: Vec<usize>,
}

impl CvResult {
    pub fn selected_lambda(&self) -> f64 {
        self.lambdas[self.index_min_mse]
    }

    /// `cv_curve.csv`: `lambda,mse_mean,mse_std`, one row per path point.
    pub fn write_csv(&self, path: &Path) -> Result<(), EnrError> {
        let mut out = String::from("lambda,mse_mean,mse_std\n");
        for i in 0..self.lambdas.len() {
            writeln!(
                out,
                "{},{},{}",
                self.lambdas[i], self.mse_mean[i], self.mse_std[i]
            )
            .expect("write to string");
        }
        fs::write(path, out).map_err(|source| EnrError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Soft-thresholding operator `S(z, t) = sign(z) * max(|z| - t, 0)`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Z-score columns with the population standard deviation (divide by n).
/// A constant column is an error carrying its index; the caller may drop it.
pub fn standardize(x: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, Vec<f64>), EnrError> {
    let n = x.rows();
    if n == 0 {
        return Err(EnrError::Dimension("no rows".into()));
    }
    let mut means = Vec::with_capacity(x.cols());
    let mut stds = Vec::with_capacity(x.cols());
    for j in 0..x.cols() {
        let col = x.column(j);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in &col {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo == hi {
            return Err(EnrError::ZeroVarianceColumn(j));
        }
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        means.push(mean);
        stds.push(sd);
    }
    let xs = DenseMatrix::from_fn(n, x.cols(), |i, j| (x.get(i, j) - means[j]) / stds[j]);
    Ok((xs, means, stds))
}

fn columns_of(x: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..x.cols()).map(|j| x.column(j)).collect()
}

fn center(y: &[f64]) -> (Vec<f64>, f64) {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    (y.iter().map(|v| v - mean).collect(), mean)
}

/// One full fit at a single penalty, starting from zero coefficients.
pub fn coordinate_descent(
    xs: &DenseMatrix,
    yc: &[f64],
    lambda: f64,
    alpha: f64,
    cfg: &EnrConfig,
) -> Result<Vec<f64>, EnrError> {
    if yc.len() != xs.rows() {
        return Err(EnrError::Dimension(format!(
            "{} rows, {} targets",
            xs.rows(),
            yc.len()
        )));
    }
    let cols = columns_of(xs);
    let mut w = vec![0.0; xs.cols()];
    let mut residual = yc.to_vec();
    cd_warm(&cols, &mut w, &mut residual, lambda, alpha, cfg)?;
    Ok(w)
}

/// Cyclic updates on a warm state; `residual` must equal `yc - xs*w` on entry.
fn cd_warm(
    cols: &[Vec<f64>],
    w: &mut [f64],
    residual: &mut [f64],
    lambda: f64,
    alpha: f64,
    cfg: &EnrConfig,
) -> Result<(), EnrError> {
    let n = residual.len() as f64;
    let col_sq_over_n: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>() / n)
        .collect();
    let threshold = lambda * alpha;
    for _pass in 0..cfg.max_passes {
        let mut max_change = 0.0_f64;
        for (j, col) in cols.iter().enumerate() {
            let old = w[j];
            let rho = col
                .iter()
                .zip(residual.iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n
                + old * col_sq_over_n[j];
            let new = soft_threshold(rho, threshold) / (col_sq_over_n[j] + lambda * (1.0 - alpha));
            if new != old {
                let delta = new - old;
                for (r, &xv) in residual.iter_mut().zip(col) {
                    *r -= xv * delta;
                }
                w[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < cfg.tolerance {
            return Ok(());
        }
    }
    Err(EnrError::NonConvergence {
        passes: cfg.max_passes,
        coefficients: w.to_vec(),
    })
}

/// Penalized objective on standardized data, for convergence diagnostics.
pub fn elastic_net_objective(
    xs: &DenseMatrix,
    yc: &[f64],
    w: &[f64],
    lambda: f64,
    alpha: f64,
) -> f64 {
    let n = yc.len() as f64;
    let fitted = xs.matvec(w);
    let rss: f64 = yc.iter().zip(&fitted).map(|(y, f)| (y - f).powi(2)).sum();
    let l2: f64 = w.iter().map(|v| v * v).sum();
    let l1: f64 = w.iter().map(|v| v.abs()).sum();
    rss / (2.0 * n) + lambda * ((1.0 - alpha) / 2.0 * l2 + alpha * l1)
}

/// Log-spaced descending penalty grid from `lambda_max` down to
/// `lambda_max * lambda_ratio`.
pub fn lambda_path(xs: &DenseMatrix, yc: &[f64], cfg: &EnrConfig) -> Result<Vec<f64>, EnrError> {
    cfg.check()?;
    let n = yc.len() as f64;
    let mut lambda_max = 0.0_f64;
    for j in 0..xs.cols() {
        let dot: f64 = xs.column(j).iter().zip(yc).map(|(a, b)| a * b).sum();
        lambda_max = lambda_max.max(dot.abs());
    }
    lambda_max /= n * cfg.alpha;
    if lambda_max == 0.0 {
        return Err(EnrError::ZeroLambdaMax);
    }
    // a whisker of headroom so the head of the path zeroes every coefficient
    // in floating point as well as in exact arithmetic
    lambda_max *= 1.0 + 1e-12;
    if cfg.n_lambda == 1 {
        return Ok(vec![lambda_max]);
    }
    let ln_max = lambda_max.ln();
    let ln_ratio = cfg.lambda_ratio.ln();
    Ok((0..cfg.n_lambda)
        .map(|i| (ln_max + ln_ratio * i as f64 / (cfg.n_lambda - 1) as f64).exp())
        .collect())
}

/// Seeded, balanced fold assignment: indices shuffled once, then dealt
/// round-robin, so fold sizes differ by at most one row.
fn assign_folds(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut fold_of = vec![0usize; n];
    for (pos, &row) in order.iter().enumerate() {
        fold_of[row] = pos % folds;
    }
    fold_of
}

/// K-fold cross validation over the shared penalty grid. Standardization is
/// refit on each training split; the grid itself comes from the full data.
#[allow(clippy::needless_range_loop)]
pub fn cross_validate(x: &DenseMatrix, y: &[f64], cfg: &EnrConfig) -> Result<CvResult, EnrError> {
    cfg.check()?;
    let n = x.rows();
    if y.len() != n {
        return Err(EnrError::Dimension(format!(
            "{n} rows, {} targets",
            y.len()
        )));
    }
    if n / cfg.folds < 2 {
        return Err(EnrError::FoldTooSmall {
            rows: n,
            folds: cfg.folds,
        });
    }

    let (xs_full, _, _) = standardize(x)?;
    let (yc_full, _) = center(y);
    let lambdas = lambda_path(&xs_full, &yc_full, cfg)?;

    let fold_of = assign_folds(n, cfg.folds, cfg.seed);
    let mut fold_mse = vec![vec![0.0_f64; cfg.folds]; lambdas.len()];

    for fold in 0..cfg.folds {
        let train_rows: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
        let held_rows: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();

        let x_train =
            DenseMatrix::from_fn(train_rows.len(), x.cols(), |i, j| x.get(train_rows[i], j));
        let y_train: Vec<f64> = train_rows.iter().map(|&i| y[i]).collect();
        let (xs_train, means, stds) = standardize(&x_train)?;
        let (yc_train, y_train_mean) = center(&y_train);

        let cols = columns_of(&xs_train);
        let mut w = vec![0.0; x.cols()];
        let mut residual = yc_train.clone();
        for (k, &lambda) in lambdas.iter().enumerate() {
            cd_warm(&cols, &mut w, &mut residual, lambda, cfg.alpha, cfg)?;
            let mut se = 0.0;
            for &row in &held_rows {
                let mut pred = y_train_mean;
                for j in 0..x.cols() {
                    pred += w[j] * (x.get(row, j) - means[j]) / stds[j];
                }
                se += (y[row] - pred).powi(2);
            }
            fold_mse[k][fold] = se / held_rows.len() as f64;
        }
    }

    let kf = cfg.folds as f64;
    let mse_mean: Vec<f64> = fold_mse
        .iter()
        .map(|row| row.iter().sum::<f64>() / kf)
        .collect();
    let mse_std: Vec<f64> = fold_mse
        .iter()
        .zip(&mse_mean)
        .map(|(row, &m)| (row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (kf - 1.0)).sqrt())
        .collect();

    // strict less keeps the earlier (larger-lambda) index on ties
    let mut index_min_mse = 0;
    for (k, &m) in mse_mean.iter().enumerate() {
        if m < mse_mean[index_min_mse] {
            index_min_mse = k;
        }
    }

    Ok(CvResult {
        lambdas,
        mse_mean,
        mse_std,
        index_min_mse,
        fold_assignment: fold_of,
    })
}

/// Cross-validate, then refit on all rows at the selected penalty. Constant
/// columns are dropped up front and reported with zero coefficients.
pub fn fit_enr(
    x: &DenseMatrix,
    y: &[f64],
    cfg: &EnrConfig,
) -> Result<(EnrModel, CvResult), EnrError> {
    cfg.check()?;
    let d = x.cols();
    let dropped_columns: Vec<usize> = (0..d)
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
    let kept: Vec<usize> = (0..d).filter(|j| !dropped_columns.contains(j)).collect();
    if kept.is_empty() {
        return Err(EnrError::AllColumnsConstant);
    }
    let x_kept = DenseMatrix::from_fn(x.rows(), kept.len(), |i, j| x.get(i, kept[j]));

    let cv = cross_validate(&x_kept, y, cfg)?;
    let lambda_selected = cv.selected_lambda();

    let (xs, means_kept, stds_kept) = standardize(&x_kept)?;
    let (yc, intercept) = center(y);
    let cols = columns_of(&xs);
    let mut w_kept = vec![0.0; kept.len()];
    let mut residual = yc.clone();
    for &lambda in &cv.lambdas[..=cv.index_min_mse] {
        cd_warm(&cols, &mut w_kept, &mut residual, lambda, cfg.alpha, cfg)?;
    }

    let mut coefficients = vec![0.0; d];
    let mut feature_means = vec![0.0; d];
    let mut feature_stds = vec![1.0; d];
    for (slot, &j) in kept.iter().enumerate() {
        coefficients[j] = w_kept[slot];
        feature_means[j] = means_kept[slot];
        feature_stds[j] = stds_kept[slot];
    }
    for &j in &dropped_columns {
        feature_means[j] = x.column(j).iter().sum::<f64>() / x.rows() as f64;
    }

    Ok((
        EnrModel {
            intercept,
            coefficients,
            lambda_selected,
            alpha: cfg.alpha,
            feature_means,
            feature_stds,
            dropped_columns,
        },
        cv,
    ))
}

impl EnrModel {
    /// `intercept + standardized(x) . w`, affine in the raw features.
    pub fn predict(&self, x_new: &DenseMatrix) -> Result<Vec<f64>, EnrError> {
        if x_new.cols() != self.coefficients.len() {
            return Err(EnrError::Dimension(format!(
                "query has {} columns, model has {}",
                x_new.cols(),
                self.coefficients.len()
            )));
        }
        Ok((0..x_new.rows())
            .map(|i| {
                let mut acc = self.intercept;
                for j in 0..self.coefficients.len() {
                    acc += self.coefficients[j] * (x_new.get(i, j) - self.feature_means[j])
                        / self.feature_stds[j];
                }
                acc
            })
            .collect())
    }

    /// Signed weights `w / sum|w|`; absolute values sum to one.
    pub fn predictor_weights(&self) -> Result<Vec<f64>, EnrError> {
        let total: f64 = self.coefficients.iter().map(|v| v.abs()).sum();
        if total == 0.0 {
            return Err(EnrError::AllZeroCoefficients);
        }
        Ok(self.coefficients.iter().map(|v| v / total).collect())
    }

    pub fn to_json(&self) -> String {
        let doc = EnrModelDoc {
            schema: "enr/1".to_string(),
            intercept: self.intercept,
            coefficients: self.coefficients.clone(),
            lambda: self.lambda_selected,
            alpha: self.alpha,
            feature_means: self.feature_means.clone(),
            feature_stds: self.feature_stds.clone(),
            dropped_columns: self.dropped_columns.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, EnrError> {
        let doc: EnrModelDoc =
            serde_json::from_str(text).map_err(|e| EnrError::Document(e.to_string()))?;
        if doc.schema != "enr/1" {
            return Err(EnrError::Document(format!(
                "unsupported schema `{}`",
                doc.schema
            )));
        }
        Ok(Self {
            intercept: doc.intercept,
            coefficients: doc.coefficients,
            lambda_selected: doc.lambda,
            alpha: doc.alpha,
            feature_means: doc.feature_means,
            feature_stds: doc.feature_stds,
            dropped_columns: doc.dropped_columns,
        })
    }
}
