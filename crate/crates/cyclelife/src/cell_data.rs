//! Canonical per-cell cycling data: domain types, the text interchange
//! format (per-cell CSV summaries + JSON manifest), batch-continuation
//! merging, exclusion filtering, and cycle-life labeling.
//!
//! Interchange layout (one directory per dataset):
//! - `<cell_id>.csv` — header
//!   `cycle,q_discharge_ah,q_charge_ah,ir_ohm,t_max_c,t_avg_c,t_min_c,charge_time_min`,
//!   one row per cycle.
//! - `<cell_id>.curves.csv` — optional, header `cycle,voltage_v,q_discharge_ah`,
//!   rows grouped by cycle with voltage descending within a group.
//! - `manifest.json` — thresholds, continuation merges, exclusions, and
//!   optional per-cell metadata (batch id, charge policy).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_NOMINAL_CAPACITY_AH: f64 = 1.1;
pub const DEFAULT_END_CAPACITY_THRESHOLD_AH: f64 = 0.885;

pub const SUMMARY_HEADER: &str =
    "cycle,q_discharge_ah,q_charge_ah,ir_ohm,t_max_c,t_avg_c,t_min_c,charge_time_min";
pub const CURVE_HEADER: &str = "cycle,voltage_v,q_discharge_ah";

pub const CURVE_VOLTAGE_MIN: f64 = 2.0;
pub const CURVE_VOLTAGE_MAX: f64 = 3.5;

#[derive(Debug, Error)]
pub enum DataError {
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
    #[error("{file}: field `{field}`: {message}")]
    Schema {
        file: PathBuf,
        field: String,
        message: String,
    },
    #[error("cell `{cell_id}`: cycle indices not contiguous from 1 (found {found} at position {position})")]
    NonContiguous {
        cell_id: String,
        found: u32,
        position: usize,
    },
    #[error("manifest references unknown cell `{cell_id}` in `{context}`")]
    UnresolvedId { cell_id: String, context: String },
    #[error("cell `{cell_id}`: {message}")]
    Invalid { cell_id: String, message: String },
    #[error("merge into `{target}`: append_length {append_length} + 1 exceeds source length {source_len}")]
    MergeLength {
        target: String,
        append_length: usize,
        source_len: usize,
    },
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One cycle's scalar summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSummary {
    pub cycle_index: u32,
    pub q_discharge: f64,
    pub q_charge: f64,
    pub internal_resistance: f64,
    pub t_max: f64,
    pub t_avg: f64,
    pub t_min: f64,
    pub charge_time: f64,
}

impl CycleSummary {
    fn check(&self) -> Result<(), String> {
        if self.cycle_index == 0 {
            return Err("cycle index must be positive".into());
        }
        for (name, v) in [
            ("q_discharge_ah", self.q_discharge),
            ("q_charge_ah", self.q_charge),
            ("ir_ohm", self.internal_resistance),
            ("charge_time_min", self.charge_time),
        ] {
            if v <= 0.0 || !v.is_finite() || v.is_nan() {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.t_min <= self.t_avg && self.t_avg <= self.t_max) {
            return Err(format!(
                "temperatures must satisfy t_min <= t_avg <= t_max, got {} / {} / {}",
                self.t_min, self.t_avg, self.t_max
            ));
        }
        Ok(())
    }
}

/// Discharge capacity as a function of voltage for one cycle. Samples are
/// ordered by strictly decreasing voltage, with capacity non-decreasing as
/// voltage falls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DischargeCurve {
    pub cycle_index: u32,
    /// `(voltage_v, q_discharge_ah)` pairs, voltage strictly decreasing.
    pub samples: Vec<(f64, f64)>,
}

impl DischargeCurve {
    fn check(&self) -> Result<(), String> {
        if self.samples.is_empty() {
            return Err("curve has no samples".into());
        }
        for (i, &(v, q)) in self.samples.iter().enumerate() {
            if !(CURVE_VOLTAGE_MIN..=CURVE_VOLTAGE_MAX).contains(&v) {
                return Err(format!(
                    "sample {i}: voltage {v} outside [{CURVE_VOLTAGE_MIN}, {CURVE_VOLTAGE_MAX}]"
                ));
            }
            if !q.is_finite() || q < 0.0 {
                return Err(format!("sample {i}: capacity {q} invalid"));
            }
            if i > 0 {
                let (pv, pq) = self.samples[i - 1];
                if v >= pv {
                    return Err(format!("sample {i}: voltage {v} not strictly below {pv}"));
                }
                if q < pq {
                    return Err(format!(
                        "sample {i}: capacity {q} decreases from {pq} as voltage falls"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One battery's identity, charge policy, per-cycle summaries, and any
/// voltage-resolved discharge curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub cell_id: String,
    pub batch_id: String,
    pub charge_policy: String,
    pub cycles: Vec<CycleSummary>,
    pub curves: BTreeMap<u32, DischargeCurve>,
    /// `Some(reason)` when the cell is excluded from modeling.
    pub excluded: Option<String>,
}

impl CellRecord {
    pub fn is_excluded(&self) -> bool {
        self.excluded.is_some()
    }

    pub fn cycle(&self, index: u32) -> Option<&CycleSummary> {
        let i = index.checked_sub(1)? as usize;
        self.cycles.get(i)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let invalid = |message: String| DataError::Invalid {
            cell_id: self.cell_id.clone(),
            message,
        };
        if self.cell_id.is_empty() {
            return Err(invalid("empty cell id".into()));
        }
        if self.cycles.is_empty() {
            return Err(invalid("cell has no cycles".into()));
        }
        for (pos, c) in self.cycles.iter().enumerate() {
            if c.cycle_index as usize != pos + 1 {
                return Err(DataError::NonContiguous {
                    cell_id: self.cell_id.clone(),
                    found: c.cycle_index,
                    position: pos,
                });
            }
            c.check()
                .map_err(|m| invalid(format!("cycle {}: {m}", c.cycle_index)))?;
        }
        for (&idx, curve) in &self.curves {
            if curve.cycle_index != idx {
                return Err(invalid(format!(
                    "curve keyed {idx} carries index {}",
                    curve.cycle_index
                )));
            }
            if idx == 0 || idx as usize > self.cycles.len() {
                return Err(invalid(format!("curve references missing cycle {idx}")));
            }
            curve
                .check()
                .map_err(|m| invalid(format!("curve at cycle {idx}: {m}")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationMerge {
    pub target: String,
    pub source: String,
    pub append_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedCell {
    pub cell_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMeta {
    pub cell_id: String,
    pub batch_id: String,
    pub charge_policy: String,
}

/// Dataset-level directives: thresholds, continuation merges, explicit
/// exclusions, and optional per-cell metadata. Mirrors `manifest.json`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExclusionManifest {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nominal_capacity_ah: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eol_threshold_ah: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end_capacity_threshold_ah: Option<f64>,
    #[serde(default)]
    pub continuation_merges: Vec<ContinuationMerge>,
    #[serde(default)]
    pub excluded_cells: Vec<ExcludedCell>,
    /// Optional per-cell metadata; cells absent here fall back to deriving a
    /// batch id from a `b<digits>c<digits>` id prefix and an empty policy.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<CellMeta>,
}

impl ExclusionManifest {
    pub fn nominal_capacity(&self) -> f64 {
        self.nominal_capacity_ah
            .unwrap_or(DEFAULT_NOMINAL_CAPACITY_AH)
    }

    /// End-of-life threshold; 80 % of nominal unless explicitly overridden.
    pub fn eol_threshold(&self) -> f64 {
        self.eol_threshold_ah
            .unwrap_or(0.8 * self.nominal_capacity())
    }

    pub fn end_capacity_threshold(&self) -> f64 {
        self.end_capacity_threshold_ah
            .unwrap_or(DEFAULT_END_CAPACITY_THRESHOLD_AH)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| DataError::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(io_err(path))
    }
}

/// A loaded fleet with its capacity thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub cells: Vec<CellRecord>,
    pub nominal_capacity: f64,
    pub eol_threshold: f64,
}

impl Dataset {
    /// Threshold defaults: 1.1 Ah nominal, end of life at 80 % of nominal.
    pub fn new(cells: Vec<CellRecord>) -> Self {
        Self::with_nominal(cells, DEFAULT_NOMINAL_CAPACITY_AH)
    }

    pub fn with_nominal(cells: Vec<CellRecord>, nominal_capacity: f64) -> Self {
        Self {
            cells,
            nominal_capacity,
            eol_threshold: 0.8 * nominal_capacity,
        }
    }

    pub fn included_cells(&self) -> impl Iterator<Item = &CellRecord> {
        self.cells.iter().filter(|c| !c.is_excluded())
    }

    pub fn cell(&self, id: &str) -> Option<&CellRecord> {
        self.cells.iter().find(|c| c.cell_id == id)
    }
}

/// Append the first `append_length + 1` cycles of `source` onto `target`,
/// renumbering cycle indices contiguously. The off-by-one convention follows
/// the reference batch-merging procedure, which appends `add_len + 1` entries.
pub fn merge_continuation(
    target: &CellRecord,
    source: &CellRecord,
    append_length: usize,
) -> Result<CellRecord, DataError> {
    let take = append_length + 1;
    if take > source.cycles.len() {
        return Err(DataError::MergeLength {
            target: target.cell_id.clone(),
            append_length,
            source_len: source.cycles.len(),
        });
    }
    let mut merged = target.clone();
    let offset = target.cycles.len() as u32;
    for (k, cycle) in source.cycles[..take].iter().enumerate() {
        let mut c = cycle.clone();
        let new_index = offset + k as u32 + 1;
        c.cycle_index = new_index;
        merged.cycles.push(c);
        if let Some(curve) = source.curves.get(&(k as u32 + 1)) {
            let mut cv = curve.clone();
            cv.cycle_index = new_index;
            merged.curves.insert(new_index, cv);
        }
    }
    Ok(merged)
}

/// Cycle-life label: the first cycle whose discharge capacity falls below
/// `eol_threshold`. Cells that never cross are censored and labeled
/// `cycle_count + 1`.
pub fn cycle_life_label(cell: &CellRecord, eol_threshold: f64) -> (u32, bool) {
    for c in &cell.cycles {
        if c.q_discharge < eol_threshold {
            return (c.cycle_index, false);
        }
    }
    (cell.cycles.len() as u32 + 1, true)
}

/// Apply a manifest to freshly loaded cells: continuation merges (sources are
/// consumed), explicit exclusions, then end-capacity flagging for cells whose
/// final discharge capacity never came near end of life. Exclusions are
/// idempotent; merges consume their sources and are applied once at load.
pub fn apply_manifest(
    mut cells: Vec<CellRecord>,
    manifest: &ExclusionManifest,
) -> Result<Vec<CellRecord>, DataError> {
    for m in &manifest.continuation_merges {
        let src_pos = cells
            .iter()
            .position(|c| c.cell_id == m.source)
            .ok_or_else(|| DataError::UnresolvedId {
                cell_id: m.source.clone(),
                context: "continuation_merges.source".into(),
            })?;
        let source = cells.remove(src_pos);
        let target = cells
            .iter_mut()
            .find(|c| c.cell_id == m.target)
            .ok_or_else(|| DataError::UnresolvedId {
                cell_id: m.target.clone(),
                context: "continuation_merges.target".into(),
            })?;
        *target = merge_continuation(target, &source, m.append_length)?;
    }

    for e in &manifest.excluded_cells {
        let cell = cells
            .iter_mut()
            .find(|c| c.cell_id == e.cell_id)
            .ok_or_else(|| DataError::UnresolvedId {
                cell_id: e.cell_id.clone(),
                context: "excluded_cells".into(),
            })?;
        if cell.excluded.is_none() {
            cell.excluded = Some(e.reason.clone());
        }
    }

    let endcap = manifest.end_capacity_threshold();
    for cell in &mut cells {
        if cell.excluded.is_none() {
            if let Some(last) = cell.cycles.last() {
                if last.q_discharge > endcap {
                    cell.excluded = Some("endcap".into());
                }
            }
        }
    }

    cells.sort_by(|a, b| (&a.batch_id, &a.cell_id).cmp(&(&b.batch_id, &b.cell_id)));
    Ok(cells)
}

/// Derive a batch id from ids shaped like `b3c17`; other ids fall into a
/// single unnamed batch.
fn derive_batch_id(cell_id: &str) -> String {
    let bytes = cell_id.as_bytes();
    if bytes.first() == Some(&b'b') {
        if let Some(c_pos) = cell_id[1..].find('c') {
            let digits = &cell_id[1..1 + c_pos];
            let rest = &cell_id[1 + c_pos + 1..];
            if !digits.is_empty()
                && digits.bytes().all(|b| b.is_ascii_digit())
                && !rest.is_empty()
                && rest.bytes().all(|b| b.is_ascii_digit())
            {
                return cell_id[..1 + c_pos].to_string();
            }
        }
    }
    String::new()
}

/// Load a dataset directory: every `<cell_id>.csv` plus optional curve files,
/// with the manifest's merges and exclusions already applied and cells
/// ordered by `(batch_id, cell_id)`.
pub fn load_dataset(root: &Path, manifest: &ExclusionManifest) -> Result<Dataset, DataError> {
    let mut ids: Vec<String> = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(stem) = name.strip_suffix(".csv") {
            if !stem.ends_with(".curves") && !stem.is_empty() {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();

    let meta: BTreeMap<&str, &CellMeta> = manifest
        .cells
        .iter()
        .map(|m| (m.cell_id.as_str(), m))
        .collect();

    let mut cells = Vec::with_capacity(ids.len());
    for id in &ids {
        let summary_path = root.join(format!("{id}.csv"));
        let cycles = read_summary_csv(&summary_path)?;
        let curves_path = root.join(format!("{id}.curves.csv"));
        let curves = if curves_path.exists() {
            read_curves_csv(&curves_path)?
        } else {
            BTreeMap::new()
        };
        let (batch_id, charge_policy) = match meta.get(id.as_str()) {
            Some(m) => (m.batch_id.clone(), m.charge_policy.clone()),
            None => (derive_batch_id(id), String::new()),
        };
        let cell = CellRecord {
            cell_id: id.clone(),
            batch_id,
            charge_policy,
            cycles,
            curves,
            excluded: None,
        };
        cell.validate()?;
        cells.push(cell);
    }

    let cells = apply_manifest(cells, manifest)?;
    Ok(Dataset {
        cells,
        nominal_capacity: manifest.nominal_capacity(),
        eol_threshold: manifest.eol_threshold(),
    })
}

fn read_summary_csv(path: &Path) -> Result<Vec<CycleSummary>, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    let parse = |line: usize, message: String| DataError::Parse {
        file: path.to_path_buf(),
        line,
        message,
    };
    let (_, header) = lines.next().ok_or_else(|| parse(1, "empty file".into()))?;
    if header.trim() != SUMMARY_HEADER {
        return Err(parse(1, format!("expected header `{SUMMARY_HEADER}`")));
    }
    let mut cycles = Vec::new();
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(parse(
                lineno + 1,
                format!("expected 8 fields, got {}", fields.len()),
            ));
        }
        let cycle_index: u32 = fields[0]
            .parse()
            .map_err(|_| parse(lineno + 1, format!("bad cycle index `{}`", fields[0])))?;
        let mut nums = [0.0_f64; 7];
        for (k, raw) in fields[1..].iter().enumerate() {
            nums[k] = raw
                .parse()
                .map_err(|_| parse(lineno + 1, format!("bad number `{raw}`")))?;
        }
        cycles.push(CycleSummary {
            cycle_index,
            q_discharge: nums[0],
            q_charge: nums[1],
            internal_resistance: nums[2],
            t_max: nums[3],
            t_avg: nums[4],
            t_min: nums[5],
            charge_time: nums[6],
        });
    }
    Ok(cycles)
}

fn read_curves_csv(path: &Path) -> Result<BTreeMap<u32, DischargeCurve>, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    let parse = |line: usize, message: String| DataError::Parse {
        file: path.to_path_buf(),
        line,
        message,
    };
    let (_, header) = lines.next().ok_or_else(|| parse(1, "empty file".into()))?;
    if header.trim() != CURVE_HEADER {
        return Err(parse(1, format!("expected header `{CURVE_HEADER}`")));
    }
    let mut curves: BTreeMap<u32, DischargeCurve> = BTreeMap::new();
    let mut open: Option<u32> = None;
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse(
                lineno + 1,
                format!("expected 3 fields, got {}", fields.len()),
            ));
        }
        let cycle: u32 = fields[0]
            .parse()
            .map_err(|_| parse(lineno + 1, format!("bad cycle index `{}`", fields[0])))?;
        let voltage: f64 = fields[1]
            .parse()
            .map_err(|_| parse(lineno + 1, format!("bad voltage `{}`", fields[1])))?;
        let q: f64 = fields[2]
            .parse()
            .map_err(|_| parse(lineno + 1, format!("bad capacity `{}`", fields[2])))?;
        if open != Some(cycle) {
            if curves.contains_key(&cycle) {
                return Err(parse(
                    lineno + 1,
                    format!("rows for cycle {cycle} are not contiguous"),
                ));
            }
            curves.insert(
                cycle,
                DischargeCurve {
                    cycle_index: cycle,
                    samples: Vec::new(),
                },
            );
            open = Some(cycle);
        }
        curves
            .get_mut(&cycle)
            .expect("just inserted")
            .samples
            .push((voltage, q));
    }
    Ok(curves)
}

/// Serialize a dataset to the interchange format, including a manifest that
/// reloads to the same dataset (merges already applied, exclusions recorded).
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for cell in &ds.cells {
        let mut out = String::with_capacity(64 * (cell.cycles.len() + 1));
        out.push_str(SUMMARY_HEADER);
        out.push('\n');
        for c in &cell.cycles {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.cycle_index,
                c.q_discharge,
                c.q_charge,
                c.internal_resistance,
                c.t_max,
                c.t_avg,
                c.t_min,
                c.charge_time
            )
            .expect("write to string");
        }
        let path = dir.join(format!("{}.csv", cell.cell_id));
        fs::write(&path, out).map_err(io_err(&path))?;

        if !cell.curves.is_empty() {
            let mut out = String::new();
            out.push_str(CURVE_HEADER);
            out.push('\n');
            for curve in cell.curves.values() {
                for &(v, q) in &curve.samples {
                    writeln!(out, "{},{},{}", curve.cycle_index, v, q).expect("write to string");
                }
            }
            let path = dir.join(format!("{}.curves.csv", cell.cell_id));
            fs::write(&path, out).map_err(io_err(&path))?;
        }
    }

    let manifest = ExclusionManifest {
        nominal_capacity_ah: Some(ds.nominal_capacity),
        eol_threshold_ah: Some(ds.eol_threshold),
        end_capacity_threshold_ah: Some(DEFAULT_END_CAPACITY_THRESHOLD_AH),
        continuation_merges: Vec::new(),
        excluded_cells: ds
            .cells
            .iter()
            .filter_map(|c| {
                c.excluded.as_ref().map(|reason| ExcludedCell {
                    cell_id: c.cell_id.clone(),
                    reason: reason.clone(),
                })
            })
            .collect(),
        cells: ds
            .cells
            .iter()
            .map(|c| CellMeta {
                cell_id: c.cell_id.clone(),
                batch_id: c.batch_id.clone(),
                charge_policy: c.charge_policy.clone(),
            })
            .collect(),
    };
    manifest.save(&dir.join("manifest.json"))
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// A minimal valid cell with the given discharge capacities, one cycle per
    /// entry, no curves.
    pub fn cell_with_capacities(id: &str, caps: &[f64]) -> CellRecord {
        let cycles = caps
            .iter()
            .enumerate()
            .map(|(i, &q)| CycleSummary {
                cycle_index: i as u32 + 1,
                q_discharge: q,
                q_charge: q + 0.01,
                internal_resistance: 0.016,
                t_max: 31.0,
                t_avg: 30.0,
                t_min: 29.5,
                charge_time: 10.0,
            })
            .collect();
        CellRecord {
            cell_id: id.to_string(),
            batch_id: derive_batch_id(id),
            charge_policy: String::new(),
            cycles,
            curves: BTreeMap::new(),
            excluded: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::cell_with_capacities;
    use super::*;

    #[test]
    fn label_first_crossing() {
        let cell = cell_with_capacities("a", &[1.10, 1.00, 0.87]);
        assert_eq!(cycle_life_label(&cell, 0.88), (3, false));
    }

    #[test]
    fn label_censored_is_count_plus_one() {
        let cell = cell_with_capacities("a", &[1.10, 1.05]);
        assert_eq!(cycle_life_label(&cell, 0.88), (3, true));
    }

    #[test]
    fn label_immediate_crossing() {
        let cell = cell_with_capacities("a", &[0.87]);
        assert_eq!(cycle_life_label(&cell, 0.88), (1, false));
    }

    #[test]
    fn merge_appends_length_plus_one() {
        let target = cell_with_capacities("a", &[1.1, 1.09]);
        let source = cell_with_capacities("b", &[1.08, 1.07, 1.06, 1.05]);
        let merged = merge_continuation(&target, &source, 2).unwrap();
        assert_eq!(merged.cycles.len(), 5); // 2 + (2 + 1)
        let indices: Vec<u32> = merged.cycles.iter().map(|c| c.cycle_index).collect();
        assert_eq!(indices, vec![1, 2, 3, 4, 5]);
        assert_eq!(merged.cycles[2].q_discharge, 1.08);
    }

    #[test]
    fn merge_zero_appends_exactly_one() {
        let target = cell_with_capacities("a", &[1.1]);
        let source = cell_with_capacities("b", &[1.0, 0.9]);
        let merged = merge_continuation(&target, &source, 0).unwrap();
        assert_eq!(merged.cycles.len(), 2);
    }

    #[test]
    fn merge_hundred_plus_660_gives_761() {
        let target = cell_with_capacities("a", &[1.1; 100]);
        let source = cell_with_capacities("b", &[1.0; 700]);
        let merged = merge_continuation(&target, &source, 660).unwrap();
        assert_eq!(merged.cycles.len(), 761);
    }

    #[test]
    fn merge_beyond_source_length_fails() {
        let target = cell_with_capacities("a", &[1.1]);
        let source = cell_with_capacities("b", &[1.0]);
        assert!(matches!(
            merge_continuation(&target, &source, 5),
            Err(DataError::MergeLength { .. })
        ));
    }

    #[test]
    fn labeling_monotone_under_healthy_extension() {
        let mut cell = cell_with_capacities("a", &[1.1, 1.0, 0.87, 0.86]);
        let before = cycle_life_label(&cell, 0.88);
        let extra = CycleSummary {
            cycle_index: 5,
            q_discharge: 0.92,
            q_charge: 0.93,
            internal_resistance: 0.017,
            t_max: 31.0,
            t_avg: 30.0,
            t_min: 29.0,
            charge_time: 10.0,
        };
        cell.cycles.push(extra);
        assert_eq!(cycle_life_label(&cell, 0.88), before);
    }

    #[test]
    fn endcap_exclusion_flag() {
        let healthy = cell_with_capacities("b1c0", &[1.1, 1.05, 0.90]);
        let manifest = ExclusionManifest::default();
        let cells = apply_manifest(vec![healthy], &manifest).unwrap();
        assert_eq!(cells[0].excluded.as_deref(), Some("endcap"));
    }

    #[test]
    fn exclusions_idempotent() {
        let cells = vec![
            cell_with_capacities("b1c0", &[1.1, 0.87]),
            cell_with_capacities("b1c1", &[1.1, 0.87]),
        ];
        let manifest = ExclusionManifest {
            excluded_cells: vec![ExcludedCell {
                cell_id: "b1c1".into(),
                reason: "noisy".into(),
            }],
            ..Default::default()
        };
        let once = apply_manifest(cells, &manifest).unwrap();
        let twice = apply_manifest(once.clone(), &manifest).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once[1].excluded.as_deref(), Some("noisy"));
    }

    #[test]
    fn unresolved_manifest_id_fails() {
        let cells = vec![cell_with_capacities("b1c0", &[1.1, 0.87])];
        let manifest = ExclusionManifest {
            excluded_cells: vec![ExcludedCell {
                cell_id: "ghost".into(),
                reason: "x".into(),
            }],
            ..Default::default()
        };
        assert!(matches!(
            apply_manifest(cells, &manifest),
            Err(DataError::UnresolvedId { .. })
        ));
    }

    #[test]
    fn non_contiguous_cycles_rejected() {
        let mut cell = cell_with_capacities("a", &[1.1, 1.0]);
        cell.cycles[1].cycle_index = 3;
        assert!(matches!(
            cell.validate(),
            Err(DataError::NonContiguous { .. })
        ));
    }

    #[test]
    fn batch_id_derivation() {
        assert_eq!(derive_batch_id("b1c0"), "b1");
        assert_eq!(derive_batch_id("b12c34"), "b12");
        assert_eq!(derive_batch_id("cellA"), "");
        assert_eq!(derive_batch_id("bXc1"), "");
    }

    #[test]
    fn load_three_cells_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cells: Vec<CellRecord> = ["b1c0", "b1c1", "b2c0"]
            .iter()
            .map(|id| cell_with_capacities(id, &[1.1, 1.0, 0.87]))
            .collect();
        let ds = Dataset::new(cells);
        write_dataset(&ds, dir.path()).unwrap();

        let loaded = load_dataset(dir.path(), &ExclusionManifest::default()).unwrap();
        assert_eq!(loaded.cells.len(), 3);
        assert!(loaded.cells.iter().all(|c| !c.is_excluded()));
    }

    #[test]
    fn round_trip_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut cell = cell_with_capacities("b1c0", &[1.1, 1.0, 0.901, 0.87]);
        cell.charge_policy = "5.2C-80PCT".into();
        cell.curves.insert(
            2,
            DischargeCurve {
                cycle_index: 2,
                samples: vec![(3.5, 0.0), (3.1, 0.4), (2.5, 0.83), (2.0, 1.0)],
            },
        );
        let ds = Dataset::new(vec![cell]);
        write_dataset(&ds, dir.path()).unwrap();
        let manifest = ExclusionManifest::load(&dir.path().join("manifest.json")).unwrap();
        let reloaded = load_dataset(dir.path(), &manifest).unwrap();
        assert_eq!(ds, reloaded);

        // and once more through the loop
        let dir2 = tempfile::tempdir().unwrap();
        write_dataset(&reloaded, dir2.path()).unwrap();
        let manifest2 = ExclusionManifest::load(&dir2.path().join("manifest.json")).unwrap();
        assert_eq!(load_dataset(dir2.path(), &manifest2).unwrap(), reloaded);
    }

    #[test]
    fn merge_via_manifest_reindexes() {
        let dir = tempfile::tempdir().unwrap();
        let a = cell_with_capacities("b1c0", &[1.1, 1.09, 0.87]);
        let b = cell_with_capacities("b2c0", &[1.05, 1.04, 1.03, 0.87]);
        write_dataset(&Dataset::new(vec![a, b]), dir.path()).unwrap();

        let manifest = ExclusionManifest {
            continuation_merges: vec![ContinuationMerge {
                target: "b1c0".into(),
                source: "b2c0".into(),
                append_length: 2,
            }],
            ..Default::default()
        };
        let ds = load_dataset(dir.path(), &manifest).unwrap();
        assert_eq!(ds.cells.len(), 1);
        assert_eq!(ds.cells[0].cycles.len(), 6); // 3 + (2 + 1)
        let indices: Vec<u32> = ds.cells[0].cycles.iter().map(|c| c.cycle_index).collect();
        assert_eq!(indices, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn invariant_violations_rejected_at_load() {
        // t_min above t_avg
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("hot.csv"),
            format!("{SUMMARY_HEADER}\n1,1.1,1.11,0.016,31,30,30.5,10\n"),
        )
        .unwrap();
        let err = load_dataset(dir.path(), &ExclusionManifest::default()).unwrap_err();
        assert!(err.to_string().contains("t_min"), "{err}");

        // negative internal resistance
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("neg.csv"),
            format!("{SUMMARY_HEADER}\n1,1.1,1.11,-0.016,31,30,29,10\n"),
        )
        .unwrap();
        let err = load_dataset(dir.path(), &ExclusionManifest::default()).unwrap_err();
        assert!(err.to_string().contains("ir_ohm"), "{err}");
    }

    #[test]
    fn curve_voltage_window_enforced_at_load() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("c.csv"),
            format!("{SUMMARY_HEADER}\n1,1.1,1.11,0.016,31,30,29,10\n"),
        )
        .unwrap();
        std::fs::write(
            dir.path().join("c.curves.csv"),
            format!("{CURVE_HEADER}\n1,3.6,0.0\n1,2.0,1.0\n"),
        )
        .unwrap();
        let err = load_dataset(dir.path(), &ExclusionManifest::default()).unwrap_err();
        assert!(err.to_string().contains("outside"), "{err}");
    }

    #[test]
    fn merge_carries_curves_with_new_indices() {
        let target = cell_with_capacities("a", &[1.1, 1.09]);
        let mut source = cell_with_capacities("b", &[1.05, 1.04]);
        source.curves.insert(
            1,
            DischargeCurve {
                cycle_index: 1,
                samples: vec![(3.5, 0.0), (2.0, 1.05)],
            },
        );
        let merged = merge_continuation(&target, &source, 1).unwrap();
        assert!(merged.curves.contains_key(&3)); // source cycle 1 lands at index 3
        assert_eq!(merged.curves[&3].cycle_index, 3);
        assert_eq!(merged.curves[&3].samples, source.curves[&1].samples);
        merged.validate().unwrap();
    }

    #[test]
    fn schema_violation_reports_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("bad.csv"),
            format!("{SUMMARY_HEADER}\n1,not_a_number,1,1,31,30,29,10\n"),
        )
        .unwrap();
        let err = load_dataset(dir.path(), &ExclusionManifest::default()).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("bad.csv"), "{text}");
        assert!(text.contains(":2"), "{text}");
    }
}
