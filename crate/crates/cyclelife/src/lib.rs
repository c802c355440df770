//! Early-cycle battery cycle-life prediction.
//!
//! Given per-cell cycling summaries (and optionally voltage-resolved discharge
//! curves) for the first ~100 cycles, this crate extracts seven early-life
//! features, fits a Gaussian process regressor (ARD exponential kernel) and an
//! elastic net regressor to the observed cycle lives, and emits comparative
//! evaluation reports.
//!
//! Modules:
//! - [`cell_data`]: canonical data model, CSV/JSON interchange, batch merging,
//!   exclusion filtering, end-of-life labeling.
//! - [`features`]: the seven-feature extraction in two modes (voltage-resolved
//!   and a bit-faithful scalar-capacity compatibility mode).
//! - [`numerics`]: dense Cholesky with jitter escalation, least squares,
//!   trapezoidal quadrature, and a quasi-Newton minimizer.
//! - [`gpr`]: Gaussian process regression with per-feature length scales,
//!   marginal-likelihood fitting, and predictor weights.
//! - [`enr`]: elastic net via cyclic coordinate descent with a regularization
//!   path and k-fold cross-validated penalty selection.
//! - [`evaluation`]: RMSE / mean-percent-error metrics and report assembly.
//! - [`synth`]: deterministic synthetic fleet generator for end-to-end testing.
//! - [`cli`]: command-line pipeline (`synth`, `ingest`, `features`, `train`,
//!   `evaluate`, `pipeline`).

pub mod cell_data;
pub mod cli;
pub mod enr;
pub mod evaluation;
pub mod features;
pub mod gpr;
pub mod numerics;
pub mod pipeline;
pub mod synth;
