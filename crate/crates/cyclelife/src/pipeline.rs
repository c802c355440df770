//! End-to-end orchestration shared by the command-line interface and tests:
//! dataset -> features -> model fits -> evaluation reports, entirely in
//! memory. File emission lives in [`crate::cli`].

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell_data::{DataError, Dataset};
use crate::enr::{fit_enr, CvResult, EnrConfig, EnrError, EnrModel};
use crate::evaluation::{build_report, EvalError, EvaluationReport};
use crate::features::{
    build_feature_matrix_cfg, FeatureBuild, FeatureConfig, FeatureError, FeatureMatrix, FeatureMode,
};
use crate::gpr::{fit_gpr, GprError, GprModel, GprTrainConfig};
use crate::numerics::DenseMatrix;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Gpr(#[from] GprError),
    #[error(transparent)]
    Enr(#[from] EnrError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("holdout fraction {0} must lie in (0, 1)")]
    BadHoldoutFraction(f64),
    #[error("holdout split left no {0} rows")]
    DegenerateSplit(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Gpr,
    Enr,
    Both,
}

impl ModelChoice {
    pub fn wants_gpr(self) -> bool {
        matches!(self, ModelChoice::Gpr | ModelChoice::Both)
    }

    pub fn wants_enr(self) -> bool {
        matches!(self, ModelChoice::Enr | ModelChoice::Both)
    }
}

/// Train-set evaluation reproduces the reference analysis; holdout is the
/// methodologically sound alternative (seeded cell-level split).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EvalSplit {
    Train,
    Holdout { fraction: f64 },
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub mode: FeatureMode,
    pub features: FeatureConfig,
    pub model: ModelChoice,
    pub split: EvalSplit,
    pub split_seed: u64,
    pub drop_censored: bool,
    pub gpr: GprTrainConfig,
    pub enr: EnrConfig,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            mode: FeatureMode::VoltageResolved,
            features: FeatureConfig::default(),
            model: ModelChoice::Both,
            split: EvalSplit::Train,
            split_seed: 0,
            drop_censored: false,
            gpr: GprTrainConfig::default(),
            enr: EnrConfig::default(),
        }
    }
}

/// Predictions and report for one model on the evaluation rows.
#[derive(Debug, Clone)]
pub struct ModelEvaluation {
    pub cell_ids: Vec<String>,
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
    pub predicted_std: Option<Vec<f64>>,
    pub report: EvaluationReport,
    /// Normalized predictor weights; absent when every coefficient is zero.
    pub predictor_weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub features: FeatureBuild,
    pub split: EvalSplit,
    pub gpr: Option<(GprModel, ModelEvaluation)>,
    pub enr: Option<(EnrModel, CvResult, ModelEvaluation)>,
}

impl PipelineRun {
    pub fn reports(&self) -> Vec<&EvaluationReport> {
        let mut out = Vec::new();
        if let Some((_, e)) = &self.gpr {
            out.push(&e.report);
        }
        if let Some((_, _, e)) = &self.enr {
            out.push(&e.report);
        }
        out
    }
}

/// Mark censored cells (those that never crossed end of life) as excluded.
pub fn flag_censored(ds: &mut Dataset) {
    for cell in &mut ds.cells {
        if cell.excluded.is_none() && crate::cell_data::cycle_life_label(cell, ds.eol_threshold).1 {
            cell.excluded = Some("censored".into());
        }
    }
}

fn split_rows(
    n: usize,
    split: EvalSplit,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), PipelineError> {
    match split {
        EvalSplit::Train => {
            let all: Vec<usize> = (0..n).collect();
            Ok((all.clone(), all))
        }
        EvalSplit::Holdout { fraction } => {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(PipelineError::BadHoldoutFraction(fraction));
            }
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            order.shuffle(&mut rng);
            let n_held = ((n as f64 * fraction).ceil() as usize).min(n);
            let mut held: Vec<usize> = order[..n_held].to_vec();
            let mut train: Vec<usize> = order[n_held..].to_vec();
            held.sort_unstable();
            train.sort_unstable();
            if train.is_empty() {
                return Err(PipelineError::DegenerateSplit("training"));
            }
            if held.is_empty() {
                return Err(PipelineError::DegenerateSplit("held-out"));
            }
            Ok((train, held))
        }
    }
}

fn select(matrix: &FeatureMatrix, rows: &[usize]) -> (DenseMatrix, Vec<f64>, Vec<String>) {
    let x = DenseMatrix::from_fn(rows.len(), 7, |i, j| matrix.rows[rows[i]].to_array()[j]);
    let y: Vec<f64> = rows.iter().map(|&i| matrix.labels[i]).collect();
    let ids: Vec<String> = rows.iter().map(|&i| matrix.cell_ids[i].clone()).collect();
    (x, y, ids)
}

/// Run feature extraction and the requested model fits on a loaded dataset.
pub fn run(ds: &Dataset, opts: &PipelineOptions) -> Result<PipelineRun, PipelineError> {
    let working = if opts.drop_censored {
        let mut clone = ds.clone();
        flag_censored(&mut clone);
        clone
    } else {
        ds.clone()
    };

    let features = build_feature_matrix_cfg(&working, &opts.features, opts.mode)?;
    let matrix = &features.matrix;
    let (train_rows, eval_rows) = split_rows(matrix.len(), opts.split, opts.split_seed)?;
    let (x_train, y_train, _) = select(matrix, &train_rows);
    let (x_eval, y_eval, eval_ids) = select(matrix, &eval_rows);

    let gpr = if opts.model.wants_gpr() {
        let model = fit_gpr(&x_train, &y_train, &opts.gpr)?;
        let (predicted, std) = model.predict(&x_eval)?;
        let report = build_report("gpr", &y_eval, &predicted, Some(&std))?;
        let weights = model.predictor_weights();
        Some((
            model,
            ModelEvaluation {
                cell_ids: eval_ids.clone(),
                observed: y_eval.clone(),
                predicted,
                predicted_std: Some(std),
                report,
                predictor_weights: Some(weights),
            },
        ))
    } else {
        None
    };

    let enr = if opts.model.wants_enr() {
        let (model, cv) = fit_enr(&x_train, &y_train, &opts.enr)?;
        let predicted = model.predict(&x_eval)?;
        let report = build_report("enr", &y_eval, &predicted, None)?;
        let weights = model.predictor_weights().ok();
        Some((
            model,
            cv,
            ModelEvaluation {
                cell_ids: eval_ids,
                observed: y_eval,
                predicted,
                predicted_std: None,
                report,
                predictor_weights: weights,
            },
        ))
    } else {
        None
    };

    Ok(PipelineRun {
        features,
        split: opts.split,
        gpr,
        enr,
    })
}
