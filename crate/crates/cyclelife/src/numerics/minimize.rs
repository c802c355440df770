use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::dot;
use super::NumericsError;

/// Settings for [`minimize`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimizerConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    /// Number of starts. The first uses `x0` as given; later starts perturb
    /// it with seeded noise that is log-normal in the caller's original
    /// parameter space (positive parameters are optimized in log space by
    /// convention, so the perturbation is additive Gaussian here).
    pub restarts: usize,
    pub seed: u64,
}

impl Default for MinimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-6,
            step_tolerance: 1e-12,
            restarts: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
}

const ARMIJO_C1: f64 = 1e-4;
const PERTURBATION_SIGMA: f64 = 0.5;

/// Quasi-Newton (BFGS) descent with backtracking line search and optional
/// multi-start. The best final value wins; ties keep the lowest restart
/// index. Deterministic given the seed.
pub fn minimize<F>(
    objective: F,
    x0: &[f64],
    cfg: &MinimizerConfig,
) -> Result<MinimizeResult, NumericsError>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    if cfg.gradient_tolerance <= 0.0 || cfg.step_tolerance <= 0.0 {
        return Err(NumericsError::InvalidConfig(
            "tolerances must be positive".into(),
        ));
    }
    if cfg.restarts == 0 {
        return Err(NumericsError::InvalidConfig(
            "restarts must be at least 1".into(),
        ));
    }

    let (f0, g0) = objective(x0);
    if !f0.is_finite() {
        return Err(NumericsError::NonFiniteObjective);
    }

    let mut best: Option<MinimizeResult> = None;
    for restart in 0..cfg.restarts {
        let start: Vec<f64> = if restart == 0 {
            x0.to_vec()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(restart as u64));
            x0.iter()
                .map(|&v| v + PERTURBATION_SIGMA * standard_normal(&mut rng))
                .collect()
        };
        let seeded = if restart == 0 {
            (f0, g0.clone())
        } else {
            let eval = objective(&start);
            if !eval.0.is_finite() {
                continue; // skip a restart whose perturbed start is unusable
            }
            eval
        };
        let candidate = bfgs(&objective, start, seeded, cfg);
        let better = match &best {
            None => true,
            Some(b) => candidate.value < b.value,
        };
        if better {
            best = Some(candidate);
        }
    }
    // restart 0 always runs, so `best` is present
    Ok(best.expect("at least one start evaluated"))
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; two uniform draws per call keeps the stream deterministic.
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn bfgs<F>(
    objective: &F,
    mut x: Vec<f64>,
    start_eval: (f64, Vec<f64>),
    cfg: &MinimizerConfig,
) -> MinimizeResult
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let dim = x.len();
    let (mut f, mut g) = start_eval;
    let mut h = identity(dim); // inverse-Hessian approximation, flat row-major
    let mut converged = inf_norm(&g) <= cfg.gradient_tolerance;

    let mut iter = 0;
    while !converged && iter < cfg.max_iterations {
        iter += 1;
        let mut d = neg_matvec(&h, &g, dim);
        if dot(&g, &d) >= 0.0 || d.iter().any(|v| !v.is_finite()) {
            h = identity(dim);
            d = g.iter().map(|v| -v).collect();
        }

        let gd = dot(&g, &d);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            let (ft, gt) = objective(&trial);
            if ft.is_finite() && ft <= f + ARMIJO_C1 * t * gd {
                accepted = Some((trial, ft, gt));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break; // line search exhausted; report the best point so far
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        x = x_new;
        f = f_new;
        g = g_new;

        if inf_norm(&g) <= cfg.gradient_tolerance {
            converged = true;
            break;
        }
        if inf_norm(&s) <= cfg.step_tolerance {
            converged = true;
            break;
        }

        let sy = dot(&s, &y);
        if sy > 1e-10 * norm2(&s) * norm2(&y) {
            bfgs_update(&mut h, &s, &y, sy, dim);
        }
    }

    MinimizeResult {
        x,
        value: f,
        converged,
    }
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, dim: usize) {
    let rho = 1.0 / sy;
    let mut hy = vec![0.0; dim];
    for i in 0..dim {
        hy[i] = dot(&h[i * dim..(i + 1) * dim], y);
    }
    let yhy = dot(y, &hy);
    let c = rho * rho * yhy + rho;
    for i in 0..dim {
        for j in 0..dim {
            h[i * dim + j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + c * s[i] * s[j];
        }
    }
}

fn identity(dim: usize) -> Vec<f64> {
    let mut h = vec![0.0; dim * dim];
    for i in 0..dim {
        h[i * dim + i] = 1.0;
    }
    h
}

fn neg_matvec(h: &[f64], g: &[f64], dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| -dot(&h[i * dim..(i + 1) * dim], g))
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}
