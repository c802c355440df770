//! The seven early-life model features, computed per cell in two modes.
//!
//! `VoltageResolved` evaluates the capacity-difference features from the
//! voltage-resolved discharge curves: both cycles are resampled onto a common
//! descending voltage grid and differenced, then the minimum and variance of
//! that vector are taken on a log10 scale.
//!
//! `PaperFaithful` is a bit-level replica of the reference listing this
//! project reproduces: the capacity difference collapses to one scalar per
//! cell, `q_discharge(100) - q_discharge(2)`, and the "minimum" and
//! "variance" columns are fleet-wide statistics replicated identically for
//! every row (including the listing's quirk of subtracting a log-scale mean
//! from raw-scale values). Those two columns therefore carry no per-cell
//! information; the mode exists so the reference results can be reproduced
//! exactly.
//!
//! Fixed column order: `min_delta_q, var_delta_q, ir_diff, avg_charge_time,
//! t_max, slope_discharge, t_integral`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell_data::{CellRecord, Dataset, DischargeCurve};
use crate::numerics::{solve_lls, trapezoid, DenseMatrix};

pub const FEATURE_NAMES: [&str; 7] = [
    "min_delta_q",
    "var_delta_q",
    "ir_diff",
    "avg_charge_time",
    "t_max",
    "slope_discharge",
    "t_integral",
];

pub const FEATURES_HEADER: &str = "cell_id,label,censored,min_delta_q,var_delta_q,ir_diff,avg_charge_time,t_max,slope_discharge,t_integral";

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cell `{cell_id}`: no discharge curve at cycle {cycle} (curves required)")]
    MissingCurve { cell_id: String, cycle: u32 },
    #[error("cell `{cell_id}`: curve at cycle {cycle} has fewer than 2 samples")]
    CurveTooShort { cell_id: String, cycle: u32 },
    #[error("cell `{cell_id}`: needs at least {needed} cycles, has {have}")]
    TooFewCycles {
        cell_id: String,
        needed: u32,
        have: usize,
    },
    #[error("cell `{cell_id}`: degenerate delta-Q ({what})")]
    DegenerateDeltaQ { cell_id: String, what: String },
    #[error("no cells usable for feature extraction: {hint}")]
    EmptyResult { hint: String },
    #[error("invalid voltage grid: {0}")]
    InvalidGrid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },
}

/// Uniform descending voltage grid on which discharge curves are compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageGrid {
    pub v_min: f64,
    pub v_max: f64,
    pub points: usize,
}

impl Default for VoltageGrid {
    fn default() -> Self {
        Self {
            v_min: 2.0,
            v_max: 3.5,
            points: 1000,
        }
    }
}

impl VoltageGrid {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let ordered = self.v_min < self.v_max;
        if !ordered {
            return Err(FeatureError::InvalidGrid(format!(
                "v_min {} must be below v_max {}",
                self.v_min, self.v_max
            )));
        }
        if self.points < 2 {
            return Err(FeatureError::InvalidGrid(
                "need at least 2 grid points".into(),
            ));
        }
        Ok(())
    }

    /// Grid voltages, descending from `v_max` to `v_min` inclusive.
    pub fn voltages(&self) -> Vec<f64> {
        let p = self.points;
        let step = (self.v_max - self.v_min) / (p - 1) as f64;
        (0..p)
            .map(|i| {
                if i == p - 1 {
                    self.v_min
                } else {
                    self.v_max - i as f64 * step
                }
            })
            .collect()
    }
}

/// Capacity difference between two cycles evaluated on a voltage grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaQ {
    pub values: Vec<f64>,
}

/// Which cycle pair the capacity difference uses, and how temperature is
/// integrated. Defaults follow the reference analysis: cycles 100 and 10 for
/// the voltage-resolved difference, cycle index as the integration abscissa.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub grid: VoltageGrid,
    pub delta_q_hi: u32,
    pub delta_q_lo: u32,
    pub temp_abscissa: TempAbscissa,
    pub threads: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            grid: VoltageGrid::default(),
            delta_q_hi: 100,
            delta_q_lo: 10,
            temp_abscissa: TempAbscissa::CycleIndex,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TempAbscissa {
    CycleIndex,
    /// Integrate against cumulative charge time instead of cycle number.
    CumulativeChargeTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    VoltageResolved,
    PaperFaithful,
}

impl std::fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureMode::VoltageResolved => write!(f, "voltage_resolved"),
            FeatureMode::PaperFaithful => write!(f, "paper_faithful"),
        }
    }
}

/// One cell's seven features, in fixed column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub min_delta_q: f64,
    pub var_delta_q: f64,
    pub ir_diff: f64,
    pub avg_charge_time: f64,
    pub t_max: f64,
    pub slope_discharge: f64,
    pub t_integral: f64,
}

impl FeatureVector {
    pub fn to_array(self) -> [f64; 7] {
        [
            self.min_delta_q,
            self.var_delta_q,
            self.ir_diff,
            self.avg_charge_time,
            self.t_max,
            self.slope_discharge,
            self.t_integral,
        ]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Self {
            min_delta_q: a[0],
            var_delta_q: a[1],
            ir_diff: a[2],
            avg_charge_time: a[3],
            t_max: a[4],
            slope_discharge: a[5],
            t_integral: a[6],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<FeatureVector>,
    pub labels: Vec<f64>,
    pub censored: Vec<bool>,
    pub cell_ids: Vec<String>,
    pub mode: FeatureMode,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.rows.len(), 7, |i, j| self.rows[i].to_array()[j])
    }

    /// Keep only the rows selected by `keep` (same length as rows).
    pub fn filtered(&self, keep: &[bool]) -> FeatureMatrix {
        assert_eq!(keep.len(), self.rows.len());
        let pick = |i: &usize| keep[*i];
        let idx: Vec<usize> = (0..self.rows.len()).filter(pick).collect();
        FeatureMatrix {
            rows: idx.iter().map(|&i| self.rows[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            censored: idx.iter().map(|&i| self.censored[i]).collect(),
            cell_ids: idx.iter().map(|&i| self.cell_ids[i].clone()).collect(),
            mode: self.mode,
        }
    }
}

/// Feature matrix plus the cells that could not be featurized, with reasons.
#[derive(Debug, Clone)]
pub struct FeatureBuild {
    pub matrix: FeatureMatrix,
    pub rejects: Vec<(String, String)>,
}

/// Piecewise-linear resampling of a discharge curve's capacity at each grid
/// voltage. Queries outside the curve's voltage span clamp to the endpoint
/// capacities.
pub fn resample_capacity(
    curve: &DischargeCurve,
    grid: &VoltageGrid,
) -> Result<Vec<f64>, FeatureError> {
    grid.validate()?;
    let s = &curve.samples;
    if s.len() < 2 {
        return Err(FeatureError::CurveTooShort {
            cell_id: String::new(),
            cycle: curve.cycle_index,
        });
    }
    let last = s.len() - 1;
    let mut out = Vec::with_capacity(grid.points);
    let mut k = 0usize;
    for v in grid.voltages() {
        let q = if v >= s[0].0 {
            s[0].1
        } else if v <= s[last].0 {
            s[last].1
        } else {
            while s[k + 1].0 > v {
                k += 1;
            }
            let (v0, q0) = s[k];
            let (v1, q1) = s[k + 1];
            let t = (v - v0) / (v1 - v0);
            q0 * (1.0 - t) + q1 * t
        };
        out.push(q);
    }
    Ok(out)
}

/// `Q_hi(V) - Q_lo(V)` elementwise on the grid.
pub fn delta_q(
    cell: &CellRecord,
    grid: &VoltageGrid,
    hi: u32,
    lo: u32,
) -> Result<DeltaQ, FeatureError> {
    let curve_at = |cycle: u32| {
        cell.curves
            .get(&cycle)
            .ok_or_else(|| FeatureError::MissingCurve {
                cell_id: cell.cell_id.clone(),
                cycle,
            })
    };
    let q_hi = resample_capacity(curve_at(hi)?, grid).map_err(|e| tag_cell(e, &cell.cell_id))?;
    let q_lo = resample_capacity(curve_at(lo)?, grid).map_err(|e| tag_cell(e, &cell.cell_id))?;
    Ok(DeltaQ {
        values: q_hi.iter().zip(&q_lo).map(|(h, l)| h - l).collect(),
    })
}

fn tag_cell(e: FeatureError, id: &str) -> FeatureError {
    match e {
        FeatureError::CurveTooShort { cycle, .. } => FeatureError::CurveTooShort {
            cell_id: id.to_string(),
            cycle,
        },
        other => other,
    }
}

/// `log10(|min delta-Q|)`. A minimum of exactly zero rejects the cell.
pub fn feat_min_delta_q(dq: &DeltaQ) -> Result<f64, FeatureError> {
    let m = dq.values.iter().copied().fold(f64::INFINITY, f64::min);
    if m == 0.0 || dq.values.is_empty() {
        return Err(FeatureError::DegenerateDeltaQ {
            cell_id: String::new(),
            what: "minimum is zero".into(),
        });
    }
    Ok(m.abs().log10())
}

/// `log10` of the sample variance of delta-Q over the grid.
pub fn feat_var_delta_q(dq: &DeltaQ) -> Result<f64, FeatureError> {
    let p = dq.values.len();
    if p < 2 {
        return Err(FeatureError::DegenerateDeltaQ {
            cell_id: String::new(),
            what: "fewer than 2 grid points".into(),
        });
    }
    let mean = dq.values.iter().sum::<f64>() / p as f64;
    let var = dq.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (p - 1) as f64;
    if var == 0.0 {
        return Err(FeatureError::DegenerateDeltaQ {
            cell_id: String::new(),
            what: "zero variance".into(),
        });
    }
    Ok(var.log10())
}

fn require_cycles(cell: &CellRecord, needed: u32) -> Result<(), FeatureError> {
    if cell.cycles.len() < needed as usize {
        return Err(FeatureError::TooFewCycles {
            cell_id: cell.cell_id.clone(),
            needed,
            have: cell.cycles.len(),
        });
    }
    Ok(())
}

/// Slope of the least-squares line through the capacity fade curve over
/// cycles 2..=100.
pub fn feat_slope_discharge(cell: &CellRecord) -> Result<f64, FeatureError> {
    require_cycles(cell, 100)?;
    let rows: Vec<Vec<f64>> = (2..=100).map(|n| vec![n as f64, 1.0]).collect();
    let q: Vec<f64> = (2..=100)
        .map(|n| cell.cycle(n).expect("length checked").q_discharge)
        .collect();
    let x = DenseMatrix::from_rows(&rows).expect("well-formed design");
    let b = solve_lls(&x, &q).map_err(|e| FeatureError::DegenerateDeltaQ {
        cell_id: cell.cell_id.clone(),
        what: format!("capacity fade fit failed: {e}"),
    })?;
    Ok(b[0])
}

/// Mean charge time over cycles 2..=6.
pub fn feat_avg_charge_time(cell: &CellRecord) -> Result<f64, FeatureError> {
    require_cycles(cell, 6)?;
    let sum: f64 = (2..=6)
        .map(|n| cell.cycle(n).expect("length checked").charge_time)
        .sum();
    Ok(sum / 5.0)
}

/// Maximum cycle temperature over cycles 2..=100.
pub fn feat_max_temp(cell: &CellRecord) -> Result<f64, FeatureError> {
    require_cycles(cell, 100)?;
    Ok((2..=100)
        .map(|n| cell.cycle(n).expect("length checked").t_max)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Internal resistance change between cycles 100 and 2.
pub fn feat_ir_diff(cell: &CellRecord) -> Result<f64, FeatureError> {
    require_cycles(cell, 100)?;
    Ok(cell.cycle(100).expect("length checked").internal_resistance
        - cell.cycle(2).expect("length checked").internal_resistance)
}

/// Trapezoidal integral of average temperature over cycles 2..=100, against
/// cycle index by default.
pub fn feat_temp_integral(cell: &CellRecord) -> Result<f64, FeatureError> {
    feat_temp_integral_abscissa(cell, TempAbscissa::CycleIndex)
}

pub fn feat_temp_integral_abscissa(
    cell: &CellRecord,
    abscissa: TempAbscissa,
) -> Result<f64, FeatureError> {
    require_cycles(cell, 100)?;
    let temps: Vec<f64> = (2..=100)
        .map(|n| cell.cycle(n).expect("length checked").t_avg)
        .collect();
    let xs: Vec<f64> = match abscissa {
        TempAbscissa::CycleIndex => (2..=100).map(f64::from).collect(),
        TempAbscissa::CumulativeChargeTime => {
            let mut acc = cell.cycle(1).expect("length checked").charge_time;
            (2..=100)
                .map(|n| {
                    acc += cell.cycle(n).expect("length checked").charge_time;
                    acc
                })
                .collect()
        }
    };
    Ok(trapezoid(&xs, &temps))
}

struct PerCell {
    cell_id: String,
    label: f64,
    censored: bool,
    ir_diff: f64,
    avg_charge_time: f64,
    t_max: f64,
    slope_discharge: f64,
    t_integral: f64,
    /// voltage-resolved per-cell min/var, present in that mode
    min_var: Option<(f64, f64)>,
    /// scalar `q(100) - q(2)`, present in paper-faithful mode
    delq_scalar: Option<f64>,
}

/// Extract the feature matrix for every included cell. Cells that cannot be
/// featurized are skipped and reported with a reason; an empty result is an
/// error.
pub fn build_feature_matrix(
    ds: &Dataset,
    grid: &VoltageGrid,
    mode: FeatureMode,
) -> Result<FeatureBuild, FeatureError> {
    let cfg = FeatureConfig {
        grid: grid.clone(),
        ..FeatureConfig::default()
    };
    build_feature_matrix_cfg(ds, &cfg, mode)
}

pub fn build_feature_matrix_cfg(
    ds: &Dataset,
    cfg: &FeatureConfig,
    mode: FeatureMode,
) -> Result<FeatureBuild, FeatureError> {
    cfg.grid.validate()?;
    let mut rejects: Vec<(String, String)> = ds
        .cells
        .iter()
        .filter_map(|c| c.excluded.as_ref().map(|r| (c.cell_id.clone(), r.clone())))
        .collect();

    let included: Vec<&CellRecord> = ds.included_cells().collect();
    let eol = ds.eol_threshold;
    let per_cell = |cell: &&CellRecord| -> Result<PerCell, (String, String)> {
        extract_one(cell, cfg, mode, eol).map_err(|e| (cell.cell_id.clone(), e.to_string()))
    };
    let results = par_map_ordered(&included, cfg.threads, per_cell);

    let mut cells = Vec::new();
    for r in results {
        match r {
            Ok(pc) => cells.push(pc),
            Err(reject) => rejects.push(reject),
        }
    }

    if cells.is_empty() {
        let hint = match mode {
            FeatureMode::VoltageResolved => format!(
                "curves required at cycles {} and {} for voltage-resolved features",
                cfg.delta_q_lo, cfg.delta_q_hi
            ),
            FeatureMode::PaperFaithful => "no cell passed the summary checks".into(),
        };
        return Err(FeatureError::EmptyResult { hint });
    }

    let (min_col, var_col) = match mode {
        FeatureMode::VoltageResolved => (None, None),
        FeatureMode::PaperFaithful => {
            let (min_c, var_c) = fleet_min_var(&cells)?;
            (Some(min_c), Some(var_c))
        }
    };

    let mut rows = Vec::with_capacity(cells.len());
    let mut labels = Vec::with_capacity(cells.len());
    let mut censored = Vec::with_capacity(cells.len());
    let mut cell_ids = Vec::with_capacity(cells.len());
    for pc in cells {
        let (min_dq, var_dq) = match mode {
            FeatureMode::VoltageResolved => pc.min_var.expect("set in voltage mode"),
            FeatureMode::PaperFaithful => (min_col.unwrap(), var_col.unwrap()),
        };
        let fv = FeatureVector {
            min_delta_q: min_dq,
            var_delta_q: var_dq,
            ir_diff: pc.ir_diff,
            avg_charge_time: pc.avg_charge_time,
            t_max: pc.t_max,
            slope_discharge: pc.slope_discharge,
            t_integral: pc.t_integral,
        };
        debug_assert!(fv.is_finite());
        rows.push(fv);
        labels.push(pc.label);
        censored.push(pc.censored);
        cell_ids.push(pc.cell_id);
    }

    Ok(FeatureBuild {
        matrix: FeatureMatrix {
            rows,
            labels,
            censored,
            cell_ids,
            mode,
        },
        rejects,
    })
}

/// The listing's fleet-wide statistics: `log10(|min_i delQ_i|)` and
/// `log10(|sum_i (delQ_i - mean_delQ)^2 / (n-1)|)` where `mean_delQ` is the
/// log10 of the mean absolute delQ — a log-scale scalar subtracted from
/// raw-scale values, preserved verbatim.
fn fleet_min_var(cells: &[PerCell]) -> Result<(f64, f64), FeatureError> {
    let delq: Vec<f64> = cells
        .iter()
        .map(|c| c.delq_scalar.expect("scalar mode"))
        .collect();
    let n = delq.len();
    let degenerate = |what: &str| FeatureError::DegenerateDeltaQ {
        cell_id: "<fleet>".into(),
        what: what.into(),
    };
    if n < 2 {
        return Err(degenerate("paper-faithful variance needs at least 2 cells"));
    }
    let min = delq.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        return Err(degenerate("fleet minimum delta-Q is zero"));
    }
    let mean_abs = delq.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    if mean_abs == 0.0 {
        return Err(degenerate("all delta-Q are zero"));
    }
    let mean_delq = mean_abs.log10();
    let ss: f64 = delq.iter().map(|v| (v - mean_delq).powi(2)).sum();
    let var = (ss / (n - 1) as f64).abs();
    if var == 0.0 {
        return Err(degenerate("fleet delta-Q variance is zero"));
    }
    Ok((min.abs().log10(), var.log10()))
}

fn extract_one(
    cell: &CellRecord,
    cfg: &FeatureConfig,
    mode: FeatureMode,
    eol_threshold: f64,
) -> Result<PerCell, FeatureError> {
    let (label, censored) = crate::cell_data::cycle_life_label(cell, eol_threshold);
    let ir_diff = feat_ir_diff(cell)?;
    let avg_charge_time = feat_avg_charge_time(cell)?;
    let t_max = feat_max_temp(cell)?;
    let slope_discharge = feat_slope_discharge(cell)?;
    let t_integral = feat_temp_integral_abscissa(cell, cfg.temp_abscissa)?;

    let (min_var, delq_scalar) = match mode {
        FeatureMode::VoltageResolved => {
            let dq = delta_q(cell, &cfg.grid, cfg.delta_q_hi, cfg.delta_q_lo)?;
            let min = feat_min_delta_q(&dq).map_err(|e| retag(e, &cell.cell_id))?;
            let var = feat_var_delta_q(&dq).map_err(|e| retag(e, &cell.cell_id))?;
            (Some((min, var)), None)
        }
        FeatureMode::PaperFaithful => {
            let hi = cell.cycle(100).expect("length checked").q_discharge;
            let lo = cell.cycle(2).expect("length checked").q_discharge;
            (None, Some(hi - lo))
        }
    };

    Ok(PerCell {
        cell_id: cell.cell_id.clone(),
        label: f64::from(label),
        censored,
        ir_diff,
        avg_charge_time,
        t_max,
        slope_discharge,
        t_integral,
        min_var,
        delq_scalar,
    })
}

fn retag(e: FeatureError, id: &str) -> FeatureError {
    match e {
        FeatureError::DegenerateDeltaQ { what, .. } => FeatureError::DegenerateDeltaQ {
            cell_id: id.to_string(),
            what,
        },
        other => other,
    }
}

/// Ordered parallel map: output order matches input order regardless of
/// scheduling.
fn par_map_ordered<T: Sync, R: Send>(
    items: &[T],
    threads: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let threads = threads.max(1).min(items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let fref = &f;
    let mut pieces: Vec<(usize, Vec<R>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(ci, slice)| scope.spawn(move || (ci, slice.iter().map(fref).collect())))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("feature worker panicked"))
            .collect()
    });
    pieces.sort_by_key(|(ci, _)| *ci);
    pieces.into_iter().flat_map(|(_, v)| v).collect()
}

/// Write `features.csv`: one row per included cell, fixed column order.
pub fn write_features_csv(matrix: &FeatureMatrix, path: &Path) -> Result<(), FeatureError> {
    let mut out = String::new();
    out.push_str(FEATURES_HEADER);
    out.push('\n');
    for i in 0..matrix.len() {
        let f = matrix.rows[i].to_array();
        write!(
            out,
            "{},{},{}",
            matrix.cell_ids[i], matrix.labels[i], matrix.censored[i]
        )
        .expect("write to string");
        for v in f {
            write!(out, ",{v}").expect("write to string");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| FeatureError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_rejects_csv(rejects: &[(String, String)], path: &Path) -> Result<(), FeatureError> {
    let mut out = String::from("cell_id,reason\n");
    for (id, reason) in rejects {
        writeln!(out, "{},{}", id, reason.replace(',', ";")).expect("write to string");
    }
    fs::write(path, out).map_err(|source| FeatureError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_features_csv(path: &Path, mode: FeatureMode) -> Result<FeatureMatrix, FeatureError> {
    let text = fs::read_to_string(path).map_err(|source| FeatureError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse = |line: usize, message: String| FeatureError::Parse {
        file: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse(1, "empty file".into()))?;
    if header.trim() != FEATURES_HEADER {
        return Err(parse(1, format!("expected header `{FEATURES_HEADER}`")));
    }
    let mut matrix = FeatureMatrix {
        rows: Vec::new(),
        labels: Vec::new(),
        censored: Vec::new(),
        cell_ids: Vec::new(),
        mode,
    };
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(parse(
                lineno + 1,
                format!("expected 10 fields, got {}", fields.len()),
            ));
        }
        let label: f64 = fields[1]
            .parse()
            .map_err(|_| parse(lineno + 1, format!("bad label `{}`", fields[1])))?;
        let censored: bool = fields[2]
            .parse()
            .map_err(|_| parse(lineno + 1, format!("bad censored flag `{}`", fields[2])))?;
        let mut vals = [0.0_f64; 7];
        for (k, raw) in fields[3..].iter().enumerate() {
            vals[k] = raw
                .parse()
                .map_err(|_| parse(lineno + 1, format!("bad number `{raw}`")))?;
        }
        matrix.cell_ids.push(fields[0].to_string());
        matrix.labels.push(label);
        matrix.censored.push(censored);
        matrix.rows.push(FeatureVector::from_array(vals));
    }
    Ok(matrix)
}
