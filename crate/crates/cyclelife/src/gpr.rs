//! Gaussian process regression with a constant mean and an ARD exponential
//! kernel,
//!
//! ```text
//! k(x_i, x_j) = sigma_f^2 * exp(-r),   r = sqrt( sum_m (x_im - x_jm)^2 / sigma_m^2 )
//! ```
//!
//! Hyperparameters (signal std, per-feature length scales, noise std, constant
//! mean) are fitted by minimizing the negative log marginal likelihood
//!
//! ```text
//! 1/2 (y - b)' (K + sn^2 I)^-1 (y - b) + 1/2 log|K + sn^2 I| + n/2 log 2pi
//! ```
//!
//! with analytic gradients; positive parameters are optimized in log space.
//! The exponential kernel is non-smooth at r = 0, where the length-scale
//! gradient is taken as 0 (the limit along any approach with finite kernel
//! value). Per-feature length scales double as relevance estimates: the
//! normalized predictor weights are `exp(-sigma_m) / sum_k exp(-sigma_k)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{
    cholesky, minimize, CholeskyFactor, DenseMatrix, MinimizerConfig, NumericsError,
};

const LN_2PI: f64 = 1.8378770664093453;
/// Fraction of the mean diagonal allowed as Cholesky jitter during fitting.
const JITTER_FRACTION: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum GprError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("need at least 2 training points, got {0}")]
    TooFewPoints(usize),
    #[error("hyperparameters must be positive: {0}")]
    InvalidHyperparams(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("model document: {0}")]
    Document(String),
}

/// Kernel and mean parameters. All scale parameters are positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprHyperparams {
    pub signal_std: f64,
    pub length_scales: Vec<f64>,
    pub noise_std: f64,
    pub constant_mean: f64,
}

impl GprHyperparams {
    fn check(&self) -> Result<(), GprError> {
        let positive_finite = |v: f64| v > 0.0 && v.is_finite();
        let ok = positive_finite(self.signal_std)
            && positive_finite(self.noise_std)
            && self.length_scales.iter().all(|&s| positive_finite(s))
            && self.constant_mean.is_finite();
        if ok {
            Ok(())
        } else {
            Err(GprError::InvalidHyperparams(format!("{self:?}")))
        }
    }

    /// Data-derived starting point: the reference tool's initial constant
    /// mean 1000 and noise std 100, signal std from the target spread,
    /// length scales from per-column spreads.
    pub fn default_init(x: &DenseMatrix, y: &[f64]) -> Self {
        let sd = population_std(y);
        let signal_std = if sd > 0.0 { sd } else { 1.0 };
        let length_scales = (0..x.cols())
            .map(|j| {
                let col = x.column(j);
                let s = population_std(&col);
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            signal_std,
            length_scales,
            noise_std: 100.0,
            constant_mean: 1000.0,
        }
    }
}

fn population_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// ARD exponential kernel value for one pair.
pub fn ard_exponential(xi: &[f64], xj: &[f64], h: &GprHyperparams) -> f64 {
    let r = scaled_distance(xi, xj, &h.length_scales);
    h.signal_std * h.signal_std * (-r).exp()
}

fn scaled_distance(xi: &[f64], xj: &[f64], scales: &[f64]) -> f64 {
    debug_assert_eq!(xi.len(), xj.len());
    debug_assert_eq!(xi.len(), scales.len());
    let mut acc = 0.0;
    for m in 0..xi.len() {
        let d = (xi[m] - xj[m]) / scales[m];
        acc += d * d;
    }
    acc.sqrt()
}

/// Symmetric matrix of pairwise kernel values; the diagonal is `sigma_f^2`.
pub fn gram(x: &DenseMatrix, h: &GprHyperparams) -> DenseMatrix {
    gram_with_distances(x, h).0
}

fn gram_with_distances(x: &DenseMatrix, h: &GprHyperparams) -> (DenseMatrix, DenseMatrix) {
    let n = x.rows();
    let sf2 = h.signal_std * h.signal_std;
    let mut k = DenseMatrix::zeros(n, n);
    let mut r = DenseMatrix::zeros(n, n);
    for i in 0..n {
        k.set(i, i, sf2);
        for j in (i + 1)..n {
            let rij = scaled_distance(x.row(i), x.row(j), &h.length_scales);
            let kij = sf2 * (-rij).exp();
            k.set(i, j, kij);
            k.set(j, i, kij);
            r.set(i, j, rij);
            r.set(j, i, rij);
        }
    }
    (k, r)
}

/// Negative log marginal likelihood and its gradient over
/// `[ln sigma_f, ln sigma_1 .. ln sigma_d, ln sigma_n, beta]`.
pub fn neg_log_marginal_likelihood(
    h: &GprHyperparams,
    x: &DenseMatrix,
    y: &[f64],
) -> Result<(f64, Vec<f64>), GprError> {
    h.check()?;
    let n = x.rows();
    let d = x.cols();
    if y.len() != n {
        return Err(GprError::Dimension(format!(
            "{n} rows, {} targets",
            y.len()
        )));
    }
    if h.length_scales.len() != d {
        return Err(GprError::Dimension(format!(
            "{d} columns, {} length scales",
            h.length_scales.len()
        )));
    }

    let (k, r) = gram_with_distances(x, h);
    let sn2 = h.noise_std * h.noise_std;
    let m = DenseMatrix::from_fn(n, n, |i, j| k.get(i, j) + if i == j { sn2 } else { 0.0 });
    let factor = cholesky(&m, JITTER_FRACTION * m.mean_diag())?;

    let z: Vec<f64> = y.iter().map(|&v| v - h.constant_mean).collect();
    let alpha = factor.solve(&z);
    let quad: f64 = z.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let value = 0.5 * quad + 0.5 * factor.log_det() + 0.5 * n as f64 * LN_2PI;

    // A = M^-1 - alpha alpha^T; gradients via  d/d theta = 1/2 tr(A dM/d theta)
    let w = factor.inverse();
    let a = |i: usize, j: usize| w.get(i, j) - alpha[i] * alpha[j];

    let mut grad = vec![0.0; d + 3];
    // ln sigma_f: dK/d ln sigma_f = 2K
    let mut g_sf = 0.0;
    for i in 0..n {
        for j in 0..n {
            g_sf += a(i, j) * k.get(i, j);
        }
    }
    grad[0] = g_sf;

    // ln sigma_m: dK_ij/d ln sigma_m = K_ij * d_ijm^2 / (r_ij sigma_m^2), 0 at r = 0
    for i in 0..n {
        for j in (i + 1)..n {
            let rij = r.get(i, j);
            if rij == 0.0 {
                continue;
            }
            let factor_ij = a(i, j) * k.get(i, j) / rij;
            let (xi, xj) = (x.row(i), x.row(j));
            for mcol in 0..d {
                let dm = xi[mcol] - xj[mcol];
                let s = h.length_scales[mcol];
                grad[1 + mcol] += factor_ij * dm * dm / (s * s);
            }
        }
    }

    // ln sigma_n: dM/d ln sigma_n = 2 sigma_n^2 I
    let trace_a: f64 = (0..n).map(|i| a(i, i)).sum();
    grad[1 + d] = sn2 * trace_a;

    // beta
    grad[2 + d] = -alpha.iter().sum::<f64>();

    Ok((value, grad))
}

/// Feature standardization recorded alongside a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardization {
    fn fit(x: &DenseMatrix) -> Self {
        let n = x.rows() as f64;
        let mut means = Vec::with_capacity(x.cols());
        let mut stds = Vec::with_capacity(x.cols());
        for j in 0..x.cols() {
            let col = x.column(j);
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            means.push(mean);
            // constant columns carry no distance information either way;
            // divide by 1 to keep values finite
            stds.push(if sd > 0.0 { sd } else { 1.0 });
        }
        Self { means, stds }
    }

    fn apply(&self, x: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| {
            (x.get(i, j) - self.means[j]) / self.stds[j]
        })
    }
}

/// Fit settings. `minimizer.restarts` defaults to 5 multi-starts; features
/// are z-scored before fitting unless `standardize` is disabled.
#[derive(Debug, Clone)]
pub struct GprTrainConfig {
    pub minimizer: MinimizerConfig,
    pub standardize: bool,
    /// Starting hyperparameters in model space (post-standardization when
    /// `standardize` is on); data-derived defaults when `None`.
    pub init: Option<GprHyperparams>,
}

impl Default for GprTrainConfig {
    fn default() -> Self {
        Self {
            minimizer: MinimizerConfig {
                max_iterations: 200,
                gradient_tolerance: 1e-5,
                step_tolerance: 1e-11,
                restarts: 5,
                seed: 0,
            },
            standardize: true,
            init: None,
        }
    }
}

/// A fitted model: hyperparameters plus cached factorization and
/// `alpha = (K + sigma_n^2 I)^-1 (y - beta)`.
#[derive(Debug, Clone)]
pub struct GprModel {
    pub hyper: GprHyperparams,
    pub standardization: Option<Standardization>,
    x_train: DenseMatrix,
    y_train: Vec<f64>,
    chol: CholeskyFactor,
    alpha: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GprModelDoc {
    schema: String,
    hyper: GprHyperparams,
    x_train: Vec<Vec<f64>>,
    y_train: Vec<f64>,
    standardization: Option<Standardization>,
}

impl GprModel {
    /// Assemble a model from fixed hyperparameters without fitting.
    /// `x` is taken as already being in model space.
    pub fn with_hyperparams(
        x: DenseMatrix,
        y: Vec<f64>,
        hyper: GprHyperparams,
    ) -> Result<Self, GprError> {
        hyper.check()?;
        if y.len() != x.rows() {
            return Err(GprError::Dimension(format!(
                "{} rows, {} targets",
                x.rows(),
                y.len()
            )));
        }
        let (chol, alpha) = factorize(&x, &y, &hyper)?;
        Ok(Self {
            hyper,
            standardization: None,
            x_train: x,
            y_train: y,
            chol,
            alpha,
        })
    }

    pub fn n_train(&self) -> usize {
        self.y_train.len()
    }

    pub fn dims(&self) -> usize {
        self.x_train.cols()
    }

    pub fn y_train(&self) -> &[f64] {
        &self.y_train
    }

    /// Posterior mean and predictive standard deviation (noise included) at
    /// each query row.
    pub fn predict(&self, x_new: &DenseMatrix) -> Result<(Vec<f64>, Vec<f64>), GprError> {
        if x_new.cols() != self.x_train.cols() {
            return Err(GprError::Dimension(format!(
                "query has {} columns, model has {}",
                x_new.cols(),
                self.x_train.cols()
            )));
        }
        let q = match &self.standardization {
            Some(s) => s.apply(x_new),
            None => x_new.clone(),
        };
        let sf2 = self.hyper.signal_std * self.hyper.signal_std;
        let sn2 = self.hyper.noise_std * self.hyper.noise_std;
        let n = self.x_train.rows();
        let mut means = Vec::with_capacity(q.rows());
        let mut stds = Vec::with_capacity(q.rows());
        for i in 0..q.rows() {
            let kstar: Vec<f64> = (0..n)
                .map(|t| ard_exponential(q.row(i), self.x_train.row(t), &self.hyper))
                .collect();
            let mean = self.hyper.constant_mean
                + kstar
                    .iter()
                    .zip(&self.alpha)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            let v = self.chol.solve_lower(&kstar);
            let latent = sf2 - v.iter().map(|x| x * x).sum::<f64>();
            // the latent posterior variance is mathematically non-negative;
            // clamp rounding noise so the predictive std keeps its noise floor
            let var = latent.max(0.0) + sn2;
            means.push(mean);
            stds.push(var.sqrt());
        }
        Ok((means, stds))
    }

    /// Normalized relevance weights from the learned length scales.
    pub fn predictor_weights(&self) -> Vec<f64> {
        let min = self
            .hyper
            .length_scales
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let unnorm: Vec<f64> = self
            .hyper
            .length_scales
            .iter()
            .map(|s| (-(s - min)).exp())
            .collect();
        let total: f64 = unnorm.iter().sum();
        unnorm.into_iter().map(|w| w / total).collect()
    }

    pub fn to_json(&self) -> String {
        let doc = GprModelDoc {
            schema: "gpr/1".to_string(),
            hyper: self.hyper.clone(),
            x_train: self.x_train.to_row_vecs(),
            y_train: self.y_train.clone(),
            standardization: self.standardization.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, GprError> {
        let doc: GprModelDoc =
            serde_json::from_str(text).map_err(|e| GprError::Document(e.to_string()))?;
        if doc.schema != "gpr/1" {
            return Err(GprError::Document(format!(
                "unsupported schema `{}`",
                doc.schema
            )));
        }
        let x = DenseMatrix::from_rows(&doc.x_train).map_err(GprError::Numerics)?;
        let (chol, alpha) = factorize(&x, &doc.y_train, &doc.hyper)?;
        Ok(Self {
            hyper: doc.hyper,
            standardization: doc.standardization,
            x_train: x,
            y_train: doc.y_train,
            chol,
            alpha,
        })
    }
}

fn factorize(
    x: &DenseMatrix,
    y: &[f64],
    h: &GprHyperparams,
) -> Result<(CholeskyFactor, Vec<f64>), GprError> {
    let n = x.rows();
    let k = gram(x, h);
    let sn2 = h.noise_std * h.noise_std;
    let m = DenseMatrix::from_fn(n, n, |i, j| k.get(i, j) + if i == j { sn2 } else { 0.0 });
    let chol = cholesky(&m, JITTER_FRACTION * m.mean_diag())?;
    let z: Vec<f64> = y.iter().map(|&v| v - h.constant_mean).collect();
    let alpha = chol.solve(&z);
    Ok((chol, alpha))
}

/// Fit hyperparameters by multi-start quasi-Newton minimization of the
/// negative log marginal likelihood. Deterministic given the data, the
/// starting point, and the minimizer seed.
pub fn fit_gpr(x: &DenseMatrix, y: &[f64], cfg: &GprTrainConfig) -> Result<GprModel, GprError> {
    let n = x.rows();
    if n < 2 {
        return Err(GprError::TooFewPoints(n));
    }
    if y.len() != n {
        return Err(GprError::Dimension(format!(
            "{n} rows, {} targets",
            y.len()
        )));
    }
    let d = x.cols();

    let standardization = cfg.standardize.then(|| Standardization::fit(x));
    let xs = match &standardization {
        Some(s) => s.apply(x),
        None => x.clone(),
    };

    let init = match &cfg.init {
        Some(h) => h.clone(),
        None => GprHyperparams::default_init(&xs, y),
    };
    init.check()?;
    if init.length_scales.len() != d {
        return Err(GprError::Dimension(format!(
            "{d} columns, {} initial length scales",
            init.length_scales.len()
        )));
    }

    let theta0 = pack(&init);
    let objective = |theta: &[f64]| -> (f64, Vec<f64>) {
        let h = unpack(theta, d);
        match neg_log_marginal_likelihood(&h, &xs, y) {
            Ok((value, grad)) => (value, grad),
            Err(_) => (f64::INFINITY, vec![0.0; theta.len()]),
        }
    };
    let result = minimize(objective, &theta0, &cfg.minimizer)?;
    let hyper = unpack(&result.x, d);

    let (chol, alpha) = factorize(&xs, y, &hyper)?;
    Ok(GprModel {
        hyper,
        standardization,
        x_train: xs,
        y_train: y.to_vec(),
        chol,
        alpha,
    })
}

fn pack(h: &GprHyperparams) -> Vec<f64> {
    let mut theta = Vec::with_capacity(h.length_scales.len() + 3);
    theta.push(h.signal_std.ln());
    theta.extend(h.length_scales.iter().map(|s| s.ln()));
    theta.push(h.noise_std.ln());
    theta.push(h.constant_mean);
    theta
}

fn unpack(theta: &[f64], d: usize) -> GprHyperparams {
    GprHyperparams {
        signal_std: theta[0].exp(),
        length_scales: theta[1..=d].iter().map(|t| t.exp()).collect(),
        noise_std: theta[1 + d].exp(),
        constant_mean: theta[2 + d],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hyper(sf: f64, scales: &[f64], sn: f64, beta: f64) -> GprHyperparams {
        GprHyperparams {
            signal_std: sf,
            length_scales: scales.to_vec(),
            noise_std: sn,
            constant_mean: beta,
        }
    }

    #[test]
    fn kernel_at_zero_distance_is_signal_variance() {
        let h = hyper(2.0, &[1.0, 3.0], 0.1, 0.0);
        let x = [0.3, -0.7];
        assert!((ard_exponential(&x, &x, &h) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn kernel_unit_distance_value() {
        let h = hyper(1.0, &[1.0], 0.1, 0.0);
        let v = ard_exponential(&[0.0], &[1.0], &h);
        assert!((v - (-1.0_f64).exp()).abs() < 1e-12);
        assert!((v - 0.3678794).abs() < 1e-7);
    }

    #[test]
    fn kernel_symmetry() {
        let h = hyper(1.3, &[0.7, 2.0, 0.4], 0.1, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            assert_eq!(ard_exponential(&a, &b, &h), ard_exponential(&b, &a, &h));
        }
    }

    #[test]
    fn gram_single_point() {
        let h = hyper(2.0, &[1.0], 0.1, 0.0);
        let x = DenseMatrix::from_rows(&[vec![0.5]]).unwrap();
        let k = gram(&x, &h);
        assert_eq!(k.rows(), 1);
        assert!((k.get(0, 0) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn gram_identical_rows_saturate() {
        let h = hyper(1.5, &[1.0, 1.0], 0.1, 0.0);
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let k = gram(&x, &h);
        for i in 0..2 {
            for j in 0..2 {
                assert!((k.get(i, j) - 2.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gram_matches_pairwise_kernel_calls() {
        let h = hyper(1.1, &[0.8, 1.7], 0.1, 0.0);
        let x =
            DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![0.5, -0.2], vec![-1.0, 0.3]]).unwrap();
        let k = gram(&x, &h);
        for i in 0..3 {
            for j in 0..3 {
                let expect = ard_exponential(x.row(i), x.row(j), &h);
                assert!((k.get(i, j) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn nlml_scalar_closed_form() {
        let h = hyper(1.5, &[1.0], 0.5, 0.3);
        let x = DenseMatrix::from_rows(&[vec![0.0]]).unwrap();
        let y = [1.2];
        let (value, _) = neg_log_marginal_likelihood(&h, &x, &y).unwrap();
        let m = 1.5 * 1.5 + 0.5 * 0.5;
        let expect = 0.5 * (1.2 - 0.3_f64).powi(2) / m + 0.5 * m.ln() + 0.5 * LN_2PI;
        assert!((value - expect).abs() < 1e-12, "{value} vs {expect}");
    }

    #[test]
    fn nlml_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 8;
        let d = 3;
        let x = DenseMatrix::from_fn(n, d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let h = hyper(1.2, &[0.9, 1.4, 0.6], 0.4, 0.2);

        let theta = pack(&h);
        let (_, grad) = neg_log_marginal_likelihood(&h, &x, &y).unwrap();
        let step = 1e-5;
        for p in 0..theta.len() {
            let mut tp = theta.clone();
            tp[p] += step;
            let (fp, _) = neg_log_marginal_likelihood(&unpack(&tp, d), &x, &y).unwrap();
            tp[p] -= 2.0 * step;
            let (fm, _) = neg_log_marginal_likelihood(&unpack(&tp, d), &x, &y).unwrap();
            let fd = (fp - fm) / (2.0 * step);
            let rel = (grad[p] - fd).abs() / fd.abs().max(1e-6);
            assert!(rel < 1e-4, "param {p}: analytic {} vs fd {fd}", grad[p]);
        }
    }

    #[test]
    fn predict_single_training_point_closed_form() {
        let h = hyper(1.5, &[1.0], 0.5, 0.3);
        let x = DenseMatrix::from_rows(&[vec![0.0]]).unwrap();
        let model = GprModel::with_hyperparams(x, vec![1.2], h.clone()).unwrap();
        let q = DenseMatrix::from_rows(&[vec![0.7]]).unwrap();
        let (mean, _) = model.predict(&q).unwrap();
        let k = ard_exponential(&[0.7], &[0.0], &h);
        let expect = 0.3 + k * (1.2 - 0.3) / (1.5 * 1.5 + 0.5 * 0.5);
        assert!((mean[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn predict_far_query_reverts_to_prior() {
        let h = hyper(2.0, &[0.5], 0.7, 5.0);
        let x = DenseMatrix::from_rows(&[vec![0.0], vec![0.3]]).unwrap();
        let model = GprModel::with_hyperparams(x, vec![5.5, 4.5], h).unwrap();
        let q = DenseMatrix::from_rows(&[vec![1e4]]).unwrap();
        let (mean, std) = model.predict(&q).unwrap();
        assert!((mean[0] - 5.0).abs() < 1e-9);
        assert!((std[0] - (4.0_f64 + 0.49).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn predict_interpolates_when_noise_vanishes() {
        let h = hyper(2.0, &[1.0], 1e-6, 0.0);
        let x = DenseMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let model = GprModel::with_hyperparams(x.clone(), vec![3.0, -1.0], h).unwrap();
        let (mean, _) = model.predict(&x).unwrap();
        assert!((mean[0] - 3.0).abs() < 1e-6);
        assert!((mean[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn prior_reversion_is_monotone_in_distance() {
        let h = hyper(1.4, &[1.0], 0.3, 2.0);
        let x = DenseMatrix::from_rows(&[vec![0.0]]).unwrap();
        let model = GprModel::with_hyperparams(x, vec![3.1], h).unwrap();
        let mut last = f64::INFINITY;
        for r in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
            let q = DenseMatrix::from_rows(&[vec![r]]).unwrap();
            let (mean, _) = model.predict(&q).unwrap();
            let gap = (mean[0] - 2.0).abs();
            assert!(gap <= last + 1e-15, "gap {gap} grew at r={r}");
            last = gap;
        }
    }

    #[test]
    fn weights_uniform_for_equal_scales() {
        let h = hyper(1.0, &[2.0; 7], 0.1, 0.0);
        let x = DenseMatrix::from_rows(&[vec![0.0; 7], vec![1.0; 7]]).unwrap();
        let model = GprModel::with_hyperparams(x, vec![0.0, 1.0], h).unwrap();
        for w in model.predictor_weights() {
            assert!((w - 1.0 / 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_hand_value_and_normalization() {
        let h = hyper(1.0, &[1.0, 2.0], 0.1, 0.0);
        let x = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let model = GprModel::with_hyperparams(x, vec![0.0, 1.0], h).unwrap();
        let w = model.predictor_weights();
        let e1 = (-1.0_f64).exp();
        let e2 = (-2.0_f64).exp();
        assert!((w[0] - e1 / (e1 + e2)).abs() < 1e-12);
        assert!((w[1] - e2 / (e1 + e2)).abs() < 1e-12);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn fit_constant_target_recovers_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DenseMatrix::from_fn(12, 2, |_, _| rng.random::<f64>());
        let y = vec![42.0; 12];
        let cfg = GprTrainConfig {
            minimizer: MinimizerConfig {
                max_iterations: 300,
                restarts: 2,
                ..MinimizerConfig::default()
            },
            ..Default::default()
        };
        let model = fit_gpr(&x, &y, &cfg).unwrap();
        let (pred, _) = model.predict(&x).unwrap();
        for p in pred {
            assert!((p - 42.0).abs() < 1e-3, "prediction {p}");
        }
    }

    #[test]
    fn fit_noise_free_smooth_function_interpolates() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 30;
        let x = DenseMatrix::from_fn(n, 2, |_, _| rng.random::<f64>() * 2.0);
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let r = x.row(i);
                5.0 + (r[0]).sin() + 0.5 * r[1] * r[1]
            })
            .collect();
        let cfg = GprTrainConfig {
            minimizer: MinimizerConfig {
                max_iterations: 500,
                gradient_tolerance: 1e-7,
                restarts: 3,
                ..MinimizerConfig::default()
            },
            ..Default::default()
        };
        let model = fit_gpr(&x, &y, &cfg).unwrap();
        let (pred, _) = model.predict(&x).unwrap();
        for (p, t) in pred.iter().zip(&y) {
            assert!(((p - t) / t).abs() < 1e-3, "predicted {p}, target {t}");
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x = DenseMatrix::from_fn(10, 3, |_, _| rng.random::<f64>());
        let y: Vec<f64> = (0..10).map(|_| rng.random::<f64>() * 10.0).collect();
        let cfg = GprTrainConfig::default();
        let a = fit_gpr(&x, &y, &cfg).unwrap();
        let b = fit_gpr(&x, &y, &cfg).unwrap();
        assert_eq!(a.hyper, b.hyper);
    }

    #[test]
    fn json_round_trip_reproduces_predictions_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = DenseMatrix::from_fn(12, 2, |_, _| rng.random::<f64>() * 3.0);
        let y: Vec<f64> = (0..12).map(|_| rng.random::<f64>() * 100.0).collect();
        let cfg = GprTrainConfig {
            minimizer: MinimizerConfig {
                max_iterations: 60,
                restarts: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        let model = fit_gpr(&x, &y, &cfg).unwrap();
        let reloaded = GprModel::from_json(&model.to_json()).unwrap();
        let q = DenseMatrix::from_fn(5, 2, |_, _| rng.random::<f64>() * 3.0);
        let (m1, s1) = model.predict(&q).unwrap();
        let (m2, s2) = reloaded.predict(&q).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn predict_rejects_dimension_mismatch() {
        let h = hyper(1.0, &[1.0, 1.0], 0.1, 0.0);
        let x = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let model = GprModel::with_hyperparams(x, vec![0.0, 1.0], h).unwrap();
        let q = DenseMatrix::from_rows(&[vec![0.5]]).unwrap();
        assert!(matches!(model.predict(&q), Err(GprError::Dimension(_))));
    }

    #[test]
    fn rejects_bad_schema() {
        assert!(GprModel::from_json("{\"schema\":\"gpr/9\",\"hyper\":{\"signal_std\":1.0,\"length_scales\":[1.0],\"noise_std\":1.0,\"constant_mean\":0.0},\"x_train\":[[0.0]],\"y_train\":[1.0],\"standardization\":null}").is_err());
    }
}
