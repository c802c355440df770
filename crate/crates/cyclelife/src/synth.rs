//! Deterministic synthetic fleet generator.
//!
//! Capacity fade follows a power-law knee, `q(n) = 1.1 (1 - 0.2 (n/life)^g)`,
//! which crosses the 0.88 Ah end-of-life threshold at `n = life` by
//! construction. Temperatures run hotter and charge times longer for
//! short-lived cells, internal resistance drifts upward, and every cycle gets
//! a voltage-resolved discharge curve from a monotone logistic template whose
//! plateau voltage shifts with age. The shift between two early cycles grows
//! sharply as configured life shrinks, so the variance of the early-cycle
//! capacity difference is learnably (negatively) correlated with cycle life.
//!
//! This is a test fixture: it targets the fleet statistics needed to exercise
//! the pipeline end to end, not electrochemical fidelity. Everything is a
//! pure function of the seeds; per-cell seeds derive from the master seed and
//! cell index via splitmix64.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell_data::{CellRecord, CycleSummary, Dataset, DischargeCurve};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("configured life {0} is below the 120-cycle minimum (feature window)")]
    LifeTooShort(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_cells: usize,
    /// Log-scale parameters of the lognormal life distribution; the defaults
    /// target a fleet mean near 806 cycles with standard deviation near 377.
    pub life_log_mean: f64,
    pub life_log_std: f64,
    pub life_clamp: (f64, f64),
    /// Knee sharpness exponent, drawn uniformly per cell.
    pub knee_exponent_range: (f64, f64),
    pub base_temperature: f64,
    pub capacity_noise: f64,
    pub temperature_noise: f64,
    pub ir_noise: f64,
    pub charge_time_noise: f64,
    /// Per-cycle random shift of the discharge-curve plateau voltage, scaled
    /// up for short-lived cells.
    pub curve_shift_noise: f64,
    pub curve_points: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_cells: 124,
            life_log_mean: 6.593157,
            life_log_std: 0.444809,
            life_clamp: (150.0, 2300.0),
            knee_exponent_range: (2.0, 6.0),
            base_temperature: 30.0,
            capacity_noise: 8e-4,
            temperature_noise: 0.5,
            ir_noise: 2e-4,
            charge_time_noise: 0.2,
            curve_shift_noise: 2e-4,
            curve_points: 25,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Zero out every noise term; fade, temperatures, and curves become exact
    /// functions of (life, knee exponent).
    pub fn noise_free(mut self) -> Self {
        self.capacity_noise = 0.0;
        self.temperature_noise = 0.0;
        self.ir_noise = 0.0;
        self.charge_time_noise = 0.0;
        self.curve_shift_noise = 0.0;
        self
    }

    fn check(&self) -> Result<(), SynthError> {
        if self.n_cells == 0 {
            return Err(SynthError::Config("n_cells must be positive".into()));
        }
        let (lo, hi) = self.life_clamp;
        if !(lo > 0.0 && lo < hi) {
            return Err(SynthError::Config(format!("bad life clamp [{lo}, {hi}]")));
        }
        if self.curve_points < 2 {
            return Err(SynthError::Config("need at least 2 curve points".into()));
        }
        Ok(())
    }
}

const NOMINAL_AH: f64 = 1.1;
const FADE_FRACTION: f64 = 0.2;
/// Generate cycles until capacity falls this far, safely past end of life and
/// below the end-capacity exclusion threshold.
const FINAL_CAPACITY_AH: f64 = 0.875;
const MIN_LIFE: f64 = 120.0;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-cell seed: a pure function of the master seed and cell index.
pub fn cell_seed(master_seed: u64, cell_index: usize) -> u64 {
    splitmix64(master_seed ^ splitmix64(cell_index as u64 + 1))
}

fn knee_capacity(n: f64, life: f64, gamma: f64) -> f64 {
    NOMINAL_AH * (1.0 - FADE_FRACTION * (n / life).powf(gamma))
}

/// One synthetic cell with the given target life, knee exponent, and policy
/// label. Cycles run a little past end of life so the label lands inside the
/// record. Bitwise deterministic given the seed.
pub fn generate_cell(
    life: f64,
    gamma: f64,
    policy: &str,
    seed: u64,
    cfg: &SynthConfig,
) -> Result<CellRecord, SynthError> {
    cfg.check()?;
    if life < MIN_LIFE {
        return Err(SynthError::LifeTooShort(life));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut draw = move |sigma: f64| sigma * normal.sample(&mut rng);

    // cell-level offsets keep the temperature, charge-time, and resistance
    // features noisier across the fleet than the capacity-derived ones
    let temp_offset = draw(2.0);
    let charge_time_offset = draw(1.5);
    let ir_base = 0.016 + draw(5e-4).abs();
    // resistance growth tracks the degradation shape, not cycle life alone
    let ir_drift = 0.04 + 0.015 * gamma;

    // hotter and slower-charging at short life
    let heat = 6.0 * (150.0 / life).powf(0.6);
    let charge_time_base = 8.0 + 1500.0 / life + charge_time_offset;

    // last cycle: first n with noise-free capacity below FINAL_CAPACITY_AH
    let overshoot =
        ((NOMINAL_AH - FINAL_CAPACITY_AH) / (NOMINAL_AH * FADE_FRACTION)).powf(1.0 / gamma);
    let mut n_max = (life * overshoot).floor() as u32 + 1;
    while knee_capacity(f64::from(n_max), life, gamma) >= FINAL_CAPACITY_AH {
        n_max += 1;
    }

    let shift_sigma = cfg.curve_shift_noise * (1.0 + 20.0 * (150.0 / life).powf(1.5));
    let voltages = curve_voltages(cfg.curve_points);

    let mut cycles = Vec::with_capacity(n_max as usize);
    let mut curves = std::collections::BTreeMap::new();
    for n in 1..=n_max {
        let age = f64::from(n) / life;
        let q_discharge = knee_capacity(f64::from(n), life, gamma) + draw(cfg.capacity_noise);
        let q_charge = q_discharge + 0.004 + draw(0.001).abs();
        let internal_resistance = ir_base * (1.0 + ir_drift * age) + draw(cfg.ir_noise);
        let t_avg = cfg.base_temperature + heat + temp_offset + draw(cfg.temperature_noise);
        let t_max = t_avg + 1.2 + draw(0.4).abs();
        let t_min = t_avg - 1.0 - draw(0.3).abs();
        let charge_time = charge_time_base + draw(cfg.charge_time_noise);

        cycles.push(CycleSummary {
            cycle_index: n,
            q_discharge,
            q_charge,
            internal_resistance,
            t_max,
            t_avg,
            t_min,
            charge_time,
        });

        // plateau voltage slides down as the cell ages; the slide between any
        // two early cycles is much larger for short-lived cells
        let plateau = 3.05 - 0.35 * age.powf(gamma) + draw(shift_sigma);
        let width = 0.18 + 0.02 * age;
        curves.insert(n, template_curve(n, q_discharge, plateau, width, &voltages));
    }

    Ok(CellRecord {
        cell_id: String::new(), // assigned by the fleet generator
        batch_id: String::new(),
        charge_policy: policy.to_string(),
        cycles,
        curves,
        excluded: None,
    })
}

fn curve_voltages(points: usize) -> Vec<f64> {
    let (v_max, v_min) = (3.5, 2.0);
    let step = (v_max - v_min) / (points - 1) as f64;
    (0..points)
        .map(|i| {
            if i == points - 1 {
                v_min
            } else {
                v_max - i as f64 * step
            }
        })
        .collect()
}

/// Monotone logistic capacity-vs-voltage template, reaching the cycle's full
/// discharge capacity at the bottom of the window. The normalization anchors
/// slightly above the window top so the first sample stays a small positive
/// capacity; an exact zero there would make the capacity difference between
/// two cycles degenerate at that grid point.
fn template_curve(
    cycle_index: u32,
    q_total: f64,
    plateau: f64,
    width: f64,
    voltages: &[f64],
) -> DischargeCurve {
    let g = |v: f64| 1.0 / (1.0 + ((v - plateau) / width).exp());
    let top = g(voltages[0] + 0.05);
    let bottom = g(*voltages.last().expect("non-empty grid"));
    let samples = voltages
        .iter()
        .map(|&v| (v, q_total * ((g(v) - top) / (bottom - top))))
        .collect();
    DischargeCurve {
        cycle_index,
        samples,
    }
}

/// A full fleet: lives from a clamped lognormal, knee exponents uniform,
/// per-cell seeds derived from the master seed, cells split into three
/// batches.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<Dataset, SynthError> {
    cfg.check()?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let life_dist = LogNormal::new(cfg.life_log_mean, cfg.life_log_std)
        .map_err(|e| SynthError::Config(format!("life distribution: {e}")))?;
    let (clamp_lo, clamp_hi) = cfg.life_clamp;
    let (g_lo, g_hi) = cfg.knee_exponent_range;

    let mut cells = Vec::with_capacity(cfg.n_cells);
    let mut batch_counts = [0usize; 3];
    for i in 0..cfg.n_cells {
        let life = life_dist.sample(&mut master).clamp(clamp_lo, clamp_hi);
        let gamma = g_lo + (g_hi - g_lo) * master.random::<f64>();
        // harsher (faster) charging loosely tracks shorter life
        let rate = (6.0 - 2.4 * (life - clamp_lo) / (clamp_hi - clamp_lo)
            + 0.3 * master.random::<f64>())
        .clamp(3.6, 6.0);
        let policy = format!("{rate:.1}C-80PCT");

        let batch = i * 3 / cfg.n_cells; // thirds, in order
        let local = batch_counts[batch];
        batch_counts[batch] += 1;

        let mut cell = generate_cell(life, gamma, &policy, cell_seed(cfg.seed, i), cfg)?;
        cell.batch_id = format!("b{}", batch + 1);
        cell.cell_id = format!("b{}c{:03}", batch + 1, local);
        cells.push(cell);
    }
    Ok(Dataset::new(cells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell_data::cycle_life_label;

    #[test]
    fn noise_free_label_matches_configured_life() {
        let cfg = SynthConfig::default().noise_free();
        for (life, gamma) in [(1000.0, 2.0), (150.0, 6.0), (431.5, 3.3)] {
            let cell = generate_cell(life, gamma, "x", 9, &cfg).unwrap();
            let (label, censored) = cycle_life_label(&cell, 0.88);
            assert!(!censored);
            assert!(
                (f64::from(label) - life).abs() <= 1.0,
                "life {life}: label {label}"
            );
        }
    }

    #[test]
    fn noise_free_capacity_strictly_decreasing() {
        let cfg = SynthConfig::default().noise_free();
        let cell = generate_cell(300.0, 4.0, "x", 1, &cfg).unwrap();
        for pair in cell.cycles.windows(2) {
            assert!(pair[1].q_discharge < pair[0].q_discharge);
        }
    }

    #[test]
    fn same_seed_bitwise_identical() {
        let cfg = SynthConfig::default();
        let a = generate_cell(500.0, 3.0, "x", 77, &cfg).unwrap();
        let b = generate_cell(500.0, 3.0, "x", 77, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn life_below_minimum_rejected() {
        let cfg = SynthConfig::default();
        assert!(matches!(
            generate_cell(100.0, 2.0, "x", 0, &cfg),
            Err(SynthError::LifeTooShort(_))
        ));
    }

    #[test]
    fn generated_cells_validate_and_curve_every_cycle() {
        let cfg = SynthConfig::default();
        let cell = generate_cell(250.0, 2.5, "5.0C-80PCT", 5, &cfg).unwrap();
        let mut named = cell.clone();
        named.cell_id = "b1c000".into();
        named.validate().unwrap();
        assert_eq!(named.curves.len(), named.cycles.len());
        // curve endpoint capacity coincides with the summary capacity
        let c10 = &named.curves[&10];
        assert!((c10.samples.last().unwrap().1 - named.cycles[9].q_discharge).abs() < 1e-12);
    }

    #[test]
    fn single_cell_dataset() {
        let cfg = SynthConfig {
            n_cells: 1,
            ..Default::default()
        };
        let ds = generate_dataset(&cfg).unwrap();
        assert_eq!(ds.cells.len(), 1);
        assert_eq!(ds.cells[0].cell_id, "b1c000");
    }

    #[test]
    fn lives_respect_clamp_and_none_censored() {
        let cfg = SynthConfig {
            n_cells: 40,
            seed: 3,
            ..Default::default()
        };
        let ds = generate_dataset(&cfg).unwrap();
        assert_eq!(ds.cells.len(), 40);
        for cell in &ds.cells {
            let (label, censored) = cycle_life_label(cell, ds.eol_threshold);
            assert!(!censored, "{} censored", cell.cell_id);
            let life = f64::from(label);
            assert!((149.0..=2302.0).contains(&life), "label {label}");
            // never excluded by the end-capacity rule
            assert!(cell.cycles.last().unwrap().q_discharge < 0.885);
        }
    }

    #[test]
    fn dataset_deterministic_per_seed() {
        let cfg = SynthConfig {
            n_cells: 5,
            seed: 11,
            ..Default::default()
        };
        let a = generate_dataset(&cfg).unwrap();
        let b = generate_dataset(&cfg).unwrap();
        assert_eq!(a, b);
        let other = generate_dataset(&SynthConfig { seed: 12, ..cfg }).unwrap();
        assert!(a != other);
    }

    #[test]
    fn short_lived_cells_have_larger_delta_q_spread() {
        let cfg = SynthConfig::default();
        let grid = crate::features::VoltageGrid::default();
        let feature_of = |life: f64, seed: u64| {
            let cell = generate_cell(life, 3.0, "x", seed, &cfg).unwrap();
            let dq = crate::features::delta_q(&cell, &grid, 100, 10).unwrap();
            crate::features::feat_var_delta_q(&dq).unwrap()
        };
        assert!(feature_of(180.0, 1) > feature_of(1500.0, 2) + 1.0);
    }
}
