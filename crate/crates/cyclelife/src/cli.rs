//! Command-line pipeline: `synth`, `ingest`, `features`, `train`, `evaluate`,
//! and `pipeline`.
//!
//! Every run resolves its effective configuration from flags over an optional
//! flat key=value config file over built-in defaults, and echoes it (plus
//! versions and step timings) into `run.json` in the output directory.
//! Outputs are written to a staging directory and committed atomically per
//! file on success; a failed run leaves no partial outputs behind.
//!
//! Exit codes: 0 success, 1 runtime error (single-line `error: ...` on
//! stderr), 2 usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::cell_data::{self, Dataset, ExclusionManifest};
use crate::enr::{fit_enr, EnrConfig, EnrModel};
use crate::evaluation::{build_report, write_metrics_csv, write_scatter_csv, EvaluationReport};
use crate::features::{
    build_feature_matrix_cfg, read_features_csv, write_features_csv, write_rejects_csv,
    FeatureConfig, FeatureMatrix, FeatureMode, TempAbscissa, VoltageGrid, FEATURE_NAMES,
};
use crate::gpr::{fit_gpr, GprModel, GprTrainConfig};
use crate::numerics::MinimizerConfig;
use crate::pipeline::{self, EvalSplit, ModelChoice, PipelineOptions};
use crate::synth::{generate_dataset, SynthConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config file {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Data(#[from] cell_data::DataError),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Gpr(#[from] crate::gpr::GprError),
    #[error(transparent)]
    Enr(#[from] crate::enr::EnrError),
    #[error(transparent)]
    Eval(#[from] crate::evaluation::EvalError),
    #[error(transparent)]
    Pipeline(#[from] pipeline::PipelineError),
    #[error(transparent)]
    Synth(#[from] crate::synth::SynthError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "cyclelife",
    version,
    about = "Predict battery cycle life from early-cycle data: feature extraction, GP and elastic net regression, evaluation reports"
)]
struct Cli {
    /// Flat key=value config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for generation, model fitting, folds, and splits.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-cell stages; results are thread-count invariant.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory receiving all artifacts.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic fleet in the interchange format.
    Synth {
        /// Number of cells to generate.
        #[arg(long)]
        n_cells: Option<usize>,
    },
    /// Load, validate, and canonicalize a dataset directory (applies the
    /// manifest's merges and exclusions).
    Ingest {
        /// Dataset directory containing per-cell CSVs and manifest.json.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Extract the seven-feature matrix from a dataset directory.
    Features {
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// Fit models from an existing features.csv.
    Train {
        /// Path to a features.csv produced by `features` or `pipeline`.
        #[arg(long)]
        features: Option<PathBuf>,
        #[command(flatten)]
        models: ModelArgs,
    },
    /// Evaluate saved models against a features.csv (train-set evaluation).
    Evaluate {
        #[arg(long)]
        features: Option<PathBuf>,
        /// Saved GP model (gpr_model.json).
        #[arg(long)]
        gpr_model: Option<PathBuf>,
        /// Saved elastic net model (enr_model.json).
        #[arg(long)]
        enr_model: Option<PathBuf>,
        #[command(flatten)]
        models: ModelArgs,
    },
    /// Full run: ingest, features, train, evaluate, report.
    Pipeline {
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        models: ModelArgs,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Ingest { .. } => "ingest",
            Command::Features { .. } => "features",
            Command::Train { .. } => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Pipeline { .. } => "pipeline",
        }
    }
}

#[derive(Args, Debug, Default)]
struct FeatureArgs {
    /// `voltage-resolved` (default) or `paper-faithful`.
    #[arg(long)]
    feature_mode: Option<String>,
    /// Points on the voltage grid.
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    v_min: Option<f64>,
    #[arg(long)]
    v_max: Option<f64>,
    /// Upper cycle of the capacity difference.
    #[arg(long)]
    delta_q_hi: Option<u32>,
    /// Lower cycle of the capacity difference.
    #[arg(long)]
    delta_q_lo: Option<u32>,
    /// Temperature-integral abscissa: `cycle` (default) or `time`.
    #[arg(long)]
    temp_abscissa: Option<String>,
    /// Exclude cells that never reached end of life.
    #[arg(long)]
    drop_censored: bool,
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    /// `gpr`, `enr`, or `both` (default).
    #[arg(long)]
    model: Option<String>,
    /// Evaluation rows: `train` (default, reproduces the reference analysis)
    /// or `holdout`.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    holdout_fraction: Option<f64>,
    #[arg(long)]
    gpr_restarts: Option<usize>,
    #[arg(long)]
    gpr_max_iterations: Option<usize>,
    /// Disable feature z-scoring before the GP fit.
    #[arg(long)]
    no_gpr_standardize: bool,
    #[arg(long)]
    enr_alpha: Option<f64>,
    #[arg(long)]
    enr_n_lambda: Option<usize>,
    #[arg(long)]
    enr_lambda_ratio: Option<f64>,
    #[arg(long)]
    enr_folds: Option<usize>,
    #[arg(long)]
    enr_tolerance: Option<f64>,
}

/// The effective configuration of a run, echoed into `run.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub input: Option<PathBuf>,
    pub features_file: Option<PathBuf>,
    pub gpr_model_file: Option<PathBuf>,
    pub enr_model_file: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub threads: usize,
    pub n_cells: usize,
    pub feature_mode: FeatureMode,
    pub grid_points: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub delta_q_hi: u32,
    pub delta_q_lo: u32,
    pub temp_abscissa: TempAbscissa,
    pub drop_censored: bool,
    pub model: ModelChoice,
    pub split: EvalSplit,
    pub gpr_restarts: usize,
    pub gpr_max_iterations: usize,
    pub gpr_standardize: bool,
    pub enr_alpha: f64,
    pub enr_n_lambda: usize,
    pub enr_lambda_ratio: f64,
    pub enr_folds: usize,
    pub enr_tolerance: f64,
}

impl RunConfig {
    fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            grid: VoltageGrid {
                v_min: self.v_min,
                v_max: self.v_max,
                points: self.grid_points,
            },
            delta_q_hi: self.delta_q_hi,
            delta_q_lo: self.delta_q_lo,
            temp_abscissa: self.temp_abscissa,
            threads: self.threads,
        }
    }

    fn gpr_config(&self) -> GprTrainConfig {
        GprTrainConfig {
            minimizer: MinimizerConfig {
                max_iterations: self.gpr_max_iterations,
                restarts: self.gpr_restarts,
                seed: self.seed,
                ..GprTrainConfig::default().minimizer
            },
            standardize: self.gpr_standardize,
            init: None,
        }
    }

    fn enr_config(&self) -> EnrConfig {
        EnrConfig {
            alpha: self.enr_alpha,
            n_lambda: self.enr_n_lambda,
            lambda_ratio: self.enr_lambda_ratio,
            folds: self.enr_folds,
            tolerance: self.enr_tolerance,
            seed: self.seed,
            ..EnrConfig::default()
        }
    }

    fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions {
            mode: self.feature_mode,
            features: self.feature_config(),
            model: self.model,
            split: self.split,
            split_seed: self.seed,
            drop_censored: self.drop_censored,
            gpr: self.gpr_config(),
            enr: self.enr_config(),
        }
    }
}

struct ConfigMap {
    path: PathBuf,
    values: BTreeMap<String, String>,
}

impl ConfigMap {
    fn empty() -> Self {
        Self {
            path: PathBuf::new(),
            values: BTreeMap::new(),
        }
    }

    fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config {
                    path: path.to_path_buf(),
                    message: format!("line {}: expected key=value", lineno + 1),
                });
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self {
            path: path.to_path_buf(),
            values,
        })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| CliError::Config {
                path: self.path.clone(),
                message: format!("key `{key}`: cannot parse `{raw}`"),
            }),
        }
    }
}

fn pick<T: FromStr>(
    flag: Option<T>,
    cfg: &ConfigMap,
    key: &str,
    default: T,
) -> Result<T, CliError> {
    Ok(flag.or(cfg.get(key)?).unwrap_or(default))
}

fn parse_feature_mode(raw: &str) -> Result<FeatureMode, CliError> {
    match raw {
        "voltage-resolved" | "voltage_resolved" => Ok(FeatureMode::VoltageResolved),
        "paper-faithful" | "paper_faithful" => Ok(FeatureMode::PaperFaithful),
        other => Err(CliError::Usage(format!(
            "unknown feature mode `{other}` (expected voltage-resolved or paper-faithful)"
        ))),
    }
}

fn parse_model(raw: &str) -> Result<ModelChoice, CliError> {
    match raw {
        "gpr" => Ok(ModelChoice::Gpr),
        "enr" => Ok(ModelChoice::Enr),
        "both" => Ok(ModelChoice::Both),
        other => Err(CliError::Usage(format!(
            "unknown model `{other}` (expected gpr, enr, or both)"
        ))),
    }
}

fn parse_abscissa(raw: &str) -> Result<TempAbscissa, CliError> {
    match raw {
        "cycle" => Ok(TempAbscissa::CycleIndex),
        "time" => Ok(TempAbscissa::CumulativeChargeTime),
        other => Err(CliError::Usage(format!(
            "unknown temperature abscissa `{other}` (expected cycle or time)"
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
fn resolve(
    cli: &Cli,
    input: Option<&PathBuf>,
    features_file: Option<&PathBuf>,
    gpr_model_file: Option<&PathBuf>,
    enr_model_file: Option<&PathBuf>,
    fargs: &FeatureArgs,
    margs: &ModelArgs,
    n_cells: Option<usize>,
) -> Result<RunConfig, CliError> {
    let cfg = match &cli.config {
        Some(path) => ConfigMap::load(path)?,
        None => ConfigMap::empty(),
    };

    let feature_mode = parse_feature_mode(&pick(
        fargs.feature_mode.clone(),
        &cfg,
        "feature-mode",
        "voltage-resolved".to_string(),
    )?)?;
    let model = parse_model(&pick(
        margs.model.clone(),
        &cfg,
        "model",
        "both".to_string(),
    )?)?;
    let temp_abscissa = parse_abscissa(&pick(
        fargs.temp_abscissa.clone(),
        &cfg,
        "temp-abscissa",
        "cycle".to_string(),
    )?)?;

    let holdout_fraction = pick(margs.holdout_fraction, &cfg, "holdout-fraction", 0.25)?;
    let split = match pick(margs.split.clone(), &cfg, "split", "train".to_string())?.as_str() {
        "train" => EvalSplit::Train,
        "holdout" => EvalSplit::Holdout {
            fraction: holdout_fraction,
        },
        other => {
            return Err(CliError::Usage(format!(
                "unknown split `{other}` (expected train or holdout)"
            )))
        }
    };

    let drop_censored = if fargs.drop_censored {
        true
    } else {
        cfg.get("drop-censored")?.unwrap_or(false)
    };
    let gpr_standardize = if margs.no_gpr_standardize {
        false
    } else {
        cfg.get("gpr-standardize")?.unwrap_or(true)
    };

    Ok(RunConfig {
        command: cli.command.name().to_string(),
        input: input.cloned().or(cfg.get("input")?),
        features_file: features_file.cloned().or(cfg.get("features")?),
        gpr_model_file: gpr_model_file.cloned().or(cfg.get("gpr-model")?),
        enr_model_file: enr_model_file.cloned().or(cfg.get("enr-model")?),
        output_dir: cli
            .output_dir
            .clone()
            .or(cfg.get("output-dir")?)
            .unwrap_or_else(|| PathBuf::from("out")),
        seed: pick(cli.seed, &cfg, "seed", 0)?,
        threads: pick(cli.threads, &cfg, "threads", 1)?.max(1),
        n_cells: pick(n_cells, &cfg, "n-cells", SynthConfig::default().n_cells)?,
        feature_mode,
        grid_points: pick(fargs.grid_points, &cfg, "grid-points", 1000)?,
        v_min: pick(fargs.v_min, &cfg, "v-min", 2.0)?,
        v_max: pick(fargs.v_max, &cfg, "v-max", 3.5)?,
        delta_q_hi: pick(fargs.delta_q_hi, &cfg, "delta-q-hi", 100)?,
        delta_q_lo: pick(fargs.delta_q_lo, &cfg, "delta-q-lo", 10)?,
        temp_abscissa,
        drop_censored,
        model,
        split,
        gpr_restarts: pick(margs.gpr_restarts, &cfg, "gpr-restarts", 5)?,
        gpr_max_iterations: pick(margs.gpr_max_iterations, &cfg, "gpr-max-iterations", 200)?,
        gpr_standardize,
        enr_alpha: pick(margs.enr_alpha, &cfg, "enr-alpha", 0.5)?,
        enr_n_lambda: pick(margs.enr_n_lambda, &cfg, "enr-n-lambda", 100)?,
        enr_lambda_ratio: pick(margs.enr_lambda_ratio, &cfg, "enr-lambda-ratio", 1e-4)?,
        enr_folds: pick(margs.enr_folds, &cfg, "enr-folds", 4)?,
        enr_tolerance: pick(margs.enr_tolerance, &cfg, "enr-tolerance", 1e-7)?,
    })
}

/// Staged output directory: everything lands in `.staging-<pid>` and moves
/// into place only when the run succeeds.
struct Stage {
    staging: PathBuf,
    final_dir: PathBuf,
}

impl Stage {
    fn new(final_dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(final_dir).map_err(io_err(final_dir))?;
        let staging = final_dir.join(format!(".staging-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
        }
        fs::create_dir_all(&staging).map_err(io_err(&staging))?;
        Ok(Self {
            staging,
            final_dir: final_dir.to_path_buf(),
        })
    }

    fn dir(&self) -> &Path {
        &self.staging
    }

    fn path(&self, name: &str) -> PathBuf {
        self.staging.join(name)
    }

    fn commit(self) -> Result<(), CliError> {
        for entry in fs::read_dir(&self.staging).map_err(io_err(&self.staging))? {
            let entry = entry.map_err(io_err(&self.staging))?;
            let target = self.final_dir.join(entry.file_name());
            if target.exists() {
                if target.is_dir() {
                    fs::remove_dir_all(&target).map_err(io_err(&target))?;
                } else {
                    fs::remove_file(&target).map_err(io_err(&target))?;
                }
            }
            fs::rename(entry.path(), &target).map_err(io_err(&target))?;
        }
        fs::remove_dir_all(&self.staging).map_err(io_err(&self.staging))?;
        Ok(())
    }

    fn abort(self) {
        let _ = fs::remove_dir_all(&self.staging);
    }
}

#[derive(Serialize)]
struct RunDoc<'a> {
    schema: &'static str,
    config: &'a RunConfig,
    versions: BTreeMap<&'static str, &'static str>,
    timings_s: &'a BTreeMap<String, f64>,
}

fn write_run_json(
    stage: &Stage,
    config: &RunConfig,
    timings: &BTreeMap<String, f64>,
) -> Result<(), CliError> {
    let mut versions = BTreeMap::new();
    versions.insert("cyclelife", env!("CARGO_PKG_VERSION"));
    let doc = RunDoc {
        schema: "run/1",
        config,
        versions,
        timings_s: timings,
    };
    let path = stage.path("run.json");
    let mut text = serde_json::to_string_pretty(&doc).expect("run doc serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))
}

/// Parse arguments and execute. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            0
        }
        Err(e) => {
            let msg = e.to_string().replace('\n', "; ");
            eprintln!("error: {msg}");
            1
        }
    }
}

fn execute(cli: &Cli) -> Result<Vec<String>, CliError> {
    let empty_f = FeatureArgs::default();
    let empty_m = ModelArgs::default();
    let config = match &cli.command {
        Command::Synth { n_cells } => {
            resolve(cli, None, None, None, None, &empty_f, &empty_m, *n_cells)?
        }
        Command::Ingest { input } => resolve(
            cli,
            input.as_ref(),
            None,
            None,
            None,
            &empty_f,
            &empty_m,
            None,
        )?,
        Command::Features { input, features } => resolve(
            cli,
            input.as_ref(),
            None,
            None,
            None,
            features,
            &empty_m,
            None,
        )?,
        Command::Train { features, models } => resolve(
            cli,
            None,
            features.as_ref(),
            None,
            None,
            &empty_f,
            models,
            None,
        )?,
        Command::Evaluate {
            features,
            gpr_model,
            enr_model,
            models,
        } => resolve(
            cli,
            None,
            features.as_ref(),
            gpr_model.as_ref(),
            enr_model.as_ref(),
            &empty_f,
            models,
            None,
        )?,
        Command::Pipeline {
            input,
            features,
            models,
        } => resolve(
            cli,
            input.as_ref(),
            None,
            None,
            None,
            features,
            models,
            None,
        )?,
    };

    let stage = Stage::new(&config.output_dir)?;
    let started = Instant::now();
    let mut timings = BTreeMap::new();
    let result = dispatch(&cli.command, &config, &stage, &mut timings);
    match result {
        Ok(mut lines) => {
            timings.insert("total".to_string(), started.elapsed().as_secs_f64());
            write_run_json(&stage, &config, &timings)?;
            stage.commit()?;
            lines.push(format!(
                "artifacts written to {}",
                config.output_dir.display()
            ));
            Ok(lines)
        }
        Err(e) => {
            stage.abort();
            Err(e)
        }
    }
}

fn dispatch(
    command: &Command,
    config: &RunConfig,
    stage: &Stage,
    timings: &mut BTreeMap<String, f64>,
) -> Result<Vec<String>, CliError> {
    match command {
        Command::Synth { .. } => cmd_synth(config, stage, timings),
        Command::Ingest { .. } => cmd_ingest(config, stage, timings),
        Command::Features { .. } => cmd_features(config, stage, timings),
        Command::Train { .. } => cmd_train(config, stage, timings),
        Command::Evaluate { .. } => cmd_evaluate(config, stage, timings),
        Command::Pipeline { .. } => cmd_pipeline(config, stage, timings),
    }
}

fn require<'a>(value: Option<&'a PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    value
        .map(PathBuf::as_path)
        .ok_or_else(|| CliError::Usage(format!("missing required --{what}")))
}

fn timed<R>(timings: &mut BTreeMap<String, f64>, name: &str, f: impl FnOnce() -> R) -> R {
    let t = Instant::now();
    let out = f();
    timings.insert(name.to_string(), t.elapsed().as_secs_f64());
    out
}

fn load_input_dataset(config: &RunConfig) -> Result<Dataset, CliError> {
    let input = require(config.input.as_ref(), "input")?;
    let manifest = ExclusionManifest::load(&input.join("manifest.json"))?;
    Ok(cell_data::load_dataset(input, &manifest)?)
}

fn cmd_synth(
    config: &RunConfig,
    stage: &Stage,
    timings: &mut BTreeMap<String, f64>,
) -> Result<Vec<String>, CliError> {
    let synth_cfg = SynthConfig {
        n_cells: config.n_cells,
        seed: config.seed,
        ..SynthConfig::default()
    };
    let ds = timed(timings, "generate", || generate_dataset(&synth_cfg))?;
    timed(timings, "write", || {
        cell_data::write_dataset(&ds, stage.dir())
    })?;
    Ok(vec![format!(
        "generated {} cells (seed {})",
        ds.cells.len(),
        config.seed
    )])
}

fn cmd_ingest(
    config: &RunConfig,
    stage: &Stage,
    timings: &mut BTreeMap<String, f64>,
) -> Result<Vec<String>, CliError> {
    let ds = timed(timings, "load", || load_input_dataset(config))?;
    timed(timings, "write", || {
        cell_data::write_dataset(&ds, stage.dir())
    })?;
    let excluded = ds.cells.iter().filter(|c| c.is_excluded()).count();
    Ok(vec![format!(
        "ingested {} cells ({} included, {} excluded)",
        ds.cells.len(),
        ds.cells.len() - excluded,
        excluded
    )])
}

fn cmd_features(
    config: &RunConfig,
    stage: &Stage,
    timings: &mut BTreeMap<String, f64>,
) -> Result<Vec<String>, CliError> {
    let mut ds = timed(timings, "load", || load_input_dataset(config))?;
    if config.drop_censored {
        pipeline::flag_censored(&mut ds);
    }
    let build = timed(timings, "features", || {
        build_feature_matrix_cfg(&ds, &config.feature_config(), config.feature_mode)
    })?;
    write_features_csv(&build.matrix, &stage.path("features.csv"))?;
    write_rejects_csv(&build.rejects, &stage.path("features.rejects.csv"))?;
    Ok(vec![format!(
        "extracted features for {} cells ({} rejected), mode {}",
        build.matrix.len(),
        build.rejects.len(),
        config.feature_mode
    )])
}

fn write_weights_csv(weights: Option<&[f64]>, path: &Path) -> Result<(), CliError> {
    let mut out = String::from("feature,weight\n");
    if let Some(w) = weights {
        for (name, v) in FEATURE_NAMES.iter().zip(w) {
            out.push_str(&format!("{name},{v}\n"));
        }
    }
    fs::write(path, out).map_err(io_err(path))
}

fn cmd_train(
    config: &RunConfig,
    stage: &Stage,
    timings: &mut BTreeMap<String, f64>,
) -> Result<Vec<String>, CliError> {
    let features_path = require(config.features_file.as_ref(), "features")?;
    let matrix = read_features_csv(features_path, config.feature_mode)?;
    let x = matrix.to_dense();
    let mut lines = Vec::new();

    if config.model.wants_gpr() {
        let model = timed(timings, "fit_gpr", || {
            fit_gpr(&x, &matrix.labels, &config.gpr_config())
        })?;
        let path = stage.path("gpr_model.json");
        fs::write(&path, model.to_json()).map_err(io_err(&path))?;
        lines.push(format!("gpr model fitted on {} cells", matrix.len()));
    }
    if config.model.wants_enr() {
        let (model, cv) = timed(timings, "fit_enr", || {
            fit_enr(&x, &matrix.labels, &config.enr_config())
        })?;
        let path = stage.path("enr_model.json");
        fs::write(&path, model.to_json()).map_err(io_err(&path))?;
        cv.write_csv(&stage.path("cv_curve.csv"))?;
        lines.push(format!(
            "enr model fitted on {} cells (lambda {})",
            matrix.len(),
            model.lambda_selected
        ));
    }
    Ok(lines)
}

fn evaluate_models(
    matrix: &FeatureMatrix,
    gpr: Option<&GprModel>,
    enr: Option<&EnrModel>,
    stage: &Stage,
) -> Result<Vec<String>, CliError> {
    let x = matrix.to_dense();
    let y = &matrix.labels;
    let mut reports: Vec<EvaluationReport> = Vec::new();
    let mut lines = Vec::new();

    if let Some(model) = gpr {
        let (pred, std) = model.predict(&x)?;
        let report = build_report("gpr", y, &pred, Some(&std))?;
        let weights = model.predictor_weights();
        emit_model_outputs(&report, y, &pred, Some(&weights), stage)?;
        lines.push(format!(
            "gpr: rmse {:.4} cycles, pct_err {:.4} %",
            report.rmse, report.pct_err
        ));
        reports.push(report);
    }
    if let Some(model) = enr {
        let pred = model.predict(&x)?;
        let report = build_report("enr", y, &pred, None)?;
        let weights = model.predictor_weights().ok();
        emit_model_outputs(&report, y, &pred, weights.as_deref(), stage)?;
        lines.push(format!(
            "enr: rmse {:.4} cycles, pct_err {:.4} %",
            report.rmse, report.pct_err
        ));
        reports.push(report);
    }

    let refs: Vec<&EvaluationReport> = reports.iter().collect();
    write_metrics_csv(&refs, &stage.path("metrics.csv"))?;
    Ok(lines)
}

fn emit_model_outputs(
    report: &EvaluationReport,
    observed: &[f64],
    predicted: &[f64],
    weights: Option<&[f64]>,
    stage: &Stage,
) -> Result<(), CliError> {
    let name = &report.model_name;
    report.write_series_csv(&stage.path(&format!("report_{name}.csv")))?;
    report.write_residuals_csv(&stage.path(&format!("residuals_{name}.csv")))?;
    write_scatter_csv(
        observed,
        predicted,
        &stage.path(&format!("scatter_{name}.csv")),
    )?;
    write_weights_csv(weights, &stage.path(&format!("weights_{name}.csv")))?;
    Ok(())
}

fn cmd_evaluate(
    config: &RunConfig,
    stage: &Stage,
    timings: &mut BTreeMap<String, f64>,
) -> Result<Vec<String>, CliError> {
    if matches!(config.split, EvalSplit::Holdout { .. }) {
        return Err(CliError::Usage(
            "holdout evaluation needs the fit and the split to share rows; use `pipeline --split holdout`"
                .into(),
        ));
    }
    let features_path = require(config.features_file.as_ref(), "features")?;
    let matrix = read_features_csv(features_path, config.feature_mode)?;

    let gpr = match &config.gpr_model_file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            Some(GprModel::from_json(&text)?)
        }
        None => None,
    };
    let enr = match &config.enr_model_file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            Some(EnrModel::from_json(&text)?)
        }
        None => None,
    };
    if gpr.is_none() && enr.is_none() {
        return Err(CliError::Usage(
            "provide --gpr-model and/or --enr-model".into(),
        ));
    }
    timed(timings, "evaluate", || {
        evaluate_models(&matrix, gpr.as_ref(), enr.as_ref(), stage)
    })
}

fn cmd_pipeline(
    config: &RunConfig,
    stage: &Stage,
    timings: &mut BTreeMap<String, f64>,
) -> Result<Vec<String>, CliError> {
    let ds = timed(timings, "load", || load_input_dataset(config))?;
    let run = timed(timings, "run", || {
        pipeline::run(&ds, &config.pipeline_options())
    })?;

    write_features_csv(&run.features.matrix, &stage.path("features.csv"))?;
    write_rejects_csv(&run.features.rejects, &stage.path("features.rejects.csv"))?;

    let mut lines = Vec::new();
    let mut reports: Vec<&EvaluationReport> = Vec::new();
    if let Some((model, eval)) = &run.gpr {
        let path = stage.path("gpr_model.json");
        fs::write(&path, model.to_json()).map_err(io_err(&path))?;
        emit_model_outputs(
            &eval.report,
            &eval.observed,
            &eval.predicted,
            eval.predictor_weights.as_deref(),
            stage,
        )?;
        lines.push(format!(
            "gpr: rmse {:.4} cycles, pct_err {:.4} %",
            eval.report.rmse, eval.report.pct_err
        ));
        reports.push(&eval.report);
    }
    if let Some((model, cv, eval)) = &run.enr {
        let path = stage.path("enr_model.json");
        fs::write(&path, model.to_json()).map_err(io_err(&path))?;
        cv.write_csv(&stage.path("cv_curve.csv"))?;
        emit_model_outputs(
            &eval.report,
            &eval.observed,
            &eval.predicted,
            eval.predictor_weights.as_deref(),
            stage,
        )?;
        lines.push(format!(
            "enr: rmse {:.4} cycles, pct_err {:.4} % (lambda {})",
            eval.report.rmse, eval.report.pct_err, model.lambda_selected
        ));
        reports.push(&eval.report);
    }
    write_metrics_csv(&reports, &stage.path("metrics.csv"))?;
    Ok(lines)
}
