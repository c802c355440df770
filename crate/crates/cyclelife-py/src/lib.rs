//! Python bindings for the battery cycle-life prediction library: dataset
//! generation and IO, feature extraction, the two regression models, and the
//! error metrics. Built as the `cyclelife_py` extension module.

use std::path::Path;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use cyclelife::cell_data::{self, ExclusionManifest};
use cyclelife::enr::{fit_enr, EnrConfig, EnrModel};
use cyclelife::evaluation;
use cyclelife::features::{
    build_feature_matrix_cfg, FeatureConfig, FeatureMatrix, FeatureMode, VoltageGrid, FEATURE_NAMES,
};
use cyclelife::gpr::{fit_gpr, GprModel, GprTrainConfig};
use cyclelife::numerics::DenseMatrix;
use cyclelife::synth::{generate_dataset, SynthConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

fn parse_mode(mode: &str) -> PyResult<FeatureMode> {
    match mode {
        "voltage-resolved" | "voltage_resolved" => Ok(FeatureMode::VoltageResolved),
        "paper-faithful" | "paper_faithful" => Ok(FeatureMode::PaperFaithful),
        other => Err(value_err(format!(
            "unknown feature mode `{other}` (expected voltage-resolved or paper-faithful)"
        ))),
    }
}

/// A fleet of cells with capacity thresholds.
#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: cell_data::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Generate a deterministic synthetic fleet.
    #[staticmethod]
    #[pyo3(signature = (n_cells = 124, seed = 0))]
    fn synthetic(n_cells: usize, seed: u64) -> PyResult<Self> {
        let cfg = SynthConfig {
            n_cells,
            seed,
            ..SynthConfig::default()
        };
        Ok(Self {
            inner: generate_dataset(&cfg).map_err(value_err)?,
        })
    }

    /// Load an interchange-format directory (per-cell CSVs + manifest.json).
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let root = Path::new(path);
        let manifest = ExclusionManifest::load(&root.join("manifest.json")).map_err(io_err)?;
        Ok(Self {
            inner: cell_data::load_dataset(root, &manifest).map_err(io_err)?,
        })
    }

    /// Write the dataset to a directory in the interchange format.
    fn write(&self, path: &str) -> PyResult<()> {
        cell_data::write_dataset(&self.inner, Path::new(path)).map_err(io_err)
    }

    fn n_cells(&self) -> usize {
        self.inner.cells.len()
    }

    fn cell_ids(&self) -> Vec<String> {
        self.inner.cells.iter().map(|c| c.cell_id.clone()).collect()
    }

    /// `(label, censored)` per included cell.
    fn cycle_life_labels(&self) -> Vec<(String, u32, bool)> {
        self.inner
            .included_cells()
            .map(|c| {
                let (label, censored) = cell_data::cycle_life_label(c, self.inner.eol_threshold);
                (c.cell_id.clone(), label, censored)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Dataset({} cells)", self.inner.cells.len())
    }
}

/// The seven-feature matrix with labels.
#[pyclass(name = "FeatureMatrix")]
struct PyFeatureMatrix {
    inner: FeatureMatrix,
    rejects: Vec<(String, String)>,
}

impl PyFeatureMatrix {
    fn design(&self) -> DenseMatrix {
        self.inner.to_dense()
    }
}

#[pymethods]
impl PyFeatureMatrix {
    #[staticmethod]
    fn feature_names() -> Vec<String> {
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner
            .rows
            .iter()
            .map(|r| r.to_array().to_vec())
            .collect()
    }

    fn labels(&self) -> Vec<f64> {
        self.inner.labels.clone()
    }

    fn censored(&self) -> Vec<bool> {
        self.inner.censored.clone()
    }

    fn cell_ids(&self) -> Vec<String> {
        self.inner.cell_ids.clone()
    }

    /// Cells skipped during extraction, with reasons.
    fn rejects(&self) -> Vec<(String, String)> {
        self.rejects.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "FeatureMatrix({} cells, mode {})",
            self.inner.len(),
            self.inner.mode
        )
    }
}

/// Extract the seven features from every included cell.
#[pyfunction]
#[pyo3(signature = (dataset, mode = "voltage-resolved", grid_points = 1000, delta_q_hi = 100, delta_q_lo = 10))]
fn extract_features(
    dataset: &PyDataset,
    mode: &str,
    grid_points: usize,
    delta_q_hi: u32,
    delta_q_lo: u32,
) -> PyResult<PyFeatureMatrix> {
    let cfg = FeatureConfig {
        grid: VoltageGrid {
            points: grid_points,
            ..VoltageGrid::default()
        },
        delta_q_hi,
        delta_q_lo,
        ..FeatureConfig::default()
    };
    let build =
        build_feature_matrix_cfg(&dataset.inner, &cfg, parse_mode(mode)?).map_err(value_err)?;
    Ok(PyFeatureMatrix {
        inner: build.matrix,
        rejects: build.rejects,
    })
}

/// Gaussian process regressor with per-feature length scales.
#[pyclass(name = "GprModel")]
struct PyGprModel {
    inner: GprModel,
}

#[pymethods]
impl PyGprModel {
    /// Fit to a feature matrix by maximizing the marginal likelihood.
    #[staticmethod]
    #[pyo3(signature = (features, restarts = 5, max_iterations = 200, standardize = true, seed = 0))]
    fn fit(
        features: &PyFeatureMatrix,
        restarts: usize,
        max_iterations: usize,
        standardize: bool,
        seed: u64,
    ) -> PyResult<Self> {
        let mut cfg = GprTrainConfig::default();
        cfg.minimizer.restarts = restarts;
        cfg.minimizer.max_iterations = max_iterations;
        cfg.minimizer.seed = seed;
        cfg.standardize = standardize;
        let model = fit_gpr(&features.design(), &features.inner.labels, &cfg).map_err(value_err)?;
        Ok(Self { inner: model })
    }

    /// Posterior mean and predictive standard deviation per row.
    fn predict(&self, features: &PyFeatureMatrix) -> PyResult<(Vec<f64>, Vec<f64>)> {
        self.inner.predict(&features.design()).map_err(value_err)
    }

    fn predict_rows(&self, rows: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let x = DenseMatrix::from_rows(&rows).map_err(value_err)?;
        self.inner.predict(&x).map_err(value_err)
    }

    fn predictor_weights(&self) -> Vec<f64> {
        self.inner.predictor_weights()
    }

    fn length_scales(&self) -> Vec<f64> {
        self.inner.hyper.length_scales.clone()
    }

    fn noise_std(&self) -> f64 {
        self.inner.hyper.noise_std
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: GprModel::from_json(text).map_err(value_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("GprModel(n_train={})", self.inner.n_train())
    }
}

/// Elastic net regressor with cross-validated penalty selection.
#[pyclass(name = "EnrModel")]
struct PyEnrModel {
    inner: EnrModel,
    cv_lambdas: Vec<f64>,
    cv_mse_mean: Vec<f64>,
}

#[pymethods]
impl PyEnrModel {
    #[staticmethod]
    #[pyo3(signature = (features, alpha = 0.5, n_lambda = 100, folds = 4, seed = 0))]
    fn fit(
        features: &PyFeatureMatrix,
        alpha: f64,
        n_lambda: usize,
        folds: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = EnrConfig {
            alpha,
            n_lambda,
            folds,
            seed,
            ..EnrConfig::default()
        };
        let (model, cv) =
            fit_enr(&features.design(), &features.inner.labels, &cfg).map_err(value_err)?;
        Ok(Self {
            inner: model,
            cv_lambdas: cv.lambdas,
            cv_mse_mean: cv.mse_mean,
        })
    }

    fn predict(&self, features: &PyFeatureMatrix) -> PyResult<Vec<f64>> {
        self.inner.predict(&features.design()).map_err(value_err)
    }

    fn predict_rows(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let x = DenseMatrix::from_rows(&rows).map_err(value_err)?;
        self.inner.predict(&x).map_err(value_err)
    }

    fn predictor_weights(&self) -> PyResult<Vec<f64>> {
        self.inner.predictor_weights().map_err(value_err)
    }

    #[getter]
    fn selected_lambda(&self) -> f64 {
        self.inner.lambda_selected
    }

    fn coefficients(&self) -> Vec<f64> {
        self.inner.coefficients.clone()
    }

    fn intercept(&self) -> f64 {
        self.inner.intercept
    }

    /// The cross-validation curve behind the penalty choice.
    fn cv_curve(&self) -> (Vec<f64>, Vec<f64>) {
        (self.cv_lambdas.clone(), self.cv_mse_mean.clone())
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: EnrModel::from_json(text).map_err(value_err)?,
            cv_lambdas: Vec::new(),
            cv_mse_mean: Vec::new(),
        })
    }

    fn __repr__(&self) -> String {
        format!("EnrModel(lambda={})", self.inner.lambda_selected)
    }
}

/// Root-mean-squared error in cycles.
#[pyfunction]
fn rmse(y: Vec<f64>, yhat: Vec<f64>) -> PyResult<f64> {
    evaluation::rmse(&y, &yhat).map_err(value_err)
}

/// Mean absolute percent error.
#[pyfunction]
fn pct_err(y: Vec<f64>, yhat: Vec<f64>) -> PyResult<f64> {
    evaluation::pct_err(&y, &yhat).map_err(value_err)
}

#[pymodule]
fn cyclelife_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFeatureMatrix>()?;
    m.add_class::<PyGprModel>()?;
    m.add_class::<PyEnrModel>()?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(pct_err, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bindings_round_trip_without_python() {
        // exercise the wrapper plumbing that does not need an interpreter
        let ds = PyDataset::synthetic(6, 3).unwrap();
        assert_eq!(ds.n_cells(), 6);
        let fm = extract_features(&ds, "voltage-resolved", 200, 100, 10).unwrap();
        assert_eq!(fm.__len__(), 6);
        let gpr = PyGprModel::fit(&fm, 1, 40, true, 0).unwrap();
        let (mean, std) = gpr.predict(&fm).unwrap();
        assert_eq!(mean.len(), 6);
        assert!(std.iter().all(|s| *s >= 0.0));
        let reloaded = PyGprModel::from_json(&gpr.to_json()).unwrap();
        assert_eq!(reloaded.predict(&fm).unwrap().0, mean);
    }
}
