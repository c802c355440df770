//! Error metrics and comparative report assembly.
//!
//! Residuals follow the `observed - predicted` convention throughout. The
//! sorted series orders cells by ascending observed cycle life, carrying
//! one-standard-deviation bands when the model provides them (the GP does,
//! the elastic net does not).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {observed} observed vs {predicted} predicted")]
    LengthMismatch { observed: usize, predicted: usize },
    #[error("empty inputs")]
    Empty,
    #[error("observed value at index {0} is zero; percent error undefined")]
    ZeroObserved(usize),
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

fn check_lengths(y: &[f64], yhat: &[f64]) -> Result<(), EvalError> {
    if y.len() != yhat.len() {
        return Err(EvalError::LengthMismatch {
            observed: y.len(),
            predicted: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// Root-mean-squared error in cycles.
pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64, EvalError> {
    check_lengths(y, yhat)?;
    let n = y.len() as f64;
    Ok((y
        .iter()
        .zip(yhat)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n)
        .sqrt())
}

/// Mean absolute percent error, `100/n * sum |y - yhat| / y`.
pub fn pct_err(y: &[f64], yhat: &[f64]) -> Result<f64, EvalError> {
    check_lengths(y, yhat)?;
    if let Some(i) = y.iter().position(|&v| v == 0.0) {
        return Err(EvalError::ZeroObserved(i));
    }
    let n = y.len() as f64;
    Ok(y.iter()
        .zip(yhat)
        .map(|(a, b)| ((a - b) / a).abs())
        .sum::<f64>()
        / n
        * 100.0)
}

/// One row of the sorted predicted-vs-observed series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub rank: usize,
    pub observed: f64,
    pub predicted: f64,
    pub std_lower: Option<f64>,
    pub std_upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub model_name: String,
    pub rmse: f64,
    pub pct_err: f64,
    /// `observed - predicted`, in input order.
    pub residuals: Vec<f64>,
    /// Ordered by ascending observed life.
    pub sorted_series: Vec<SeriesPoint>,
    pub n: usize,
}

/// Assemble a report; `std` adds plus/minus one standard deviation bands to
/// the sorted series.
pub fn build_report(
    name: &str,
    y: &[f64],
    yhat: &[f64],
    std: Option<&[f64]>,
) -> Result<EvaluationReport, EvalError> {
    check_lengths(y, yhat)?;
    if let Some(s) = std {
        if s.len() != y.len() {
            return Err(EvalError::LengthMismatch {
                observed: y.len(),
                predicted: s.len(),
            });
        }
    }
    let residuals: Vec<f64> = y.iter().zip(yhat).map(|(a, b)| a - b).collect();

    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let sorted_series: Vec<SeriesPoint> = order
        .iter()
        .enumerate()
        .map(|(rank, &i)| SeriesPoint {
            rank: rank + 1,
            observed: y[i],
            predicted: yhat[i],
            std_lower: std.map(|s| yhat[i] - s[i]),
            std_upper: std.map(|s| yhat[i] + s[i]),
        })
        .collect();

    // metrics are summed in sorted order so a report reconstructed from its
    // CSV serialization reproduces them bitwise
    let y_sorted: Vec<f64> = sorted_series.iter().map(|p| p.observed).collect();
    let yhat_sorted: Vec<f64> = sorted_series.iter().map(|p| p.predicted).collect();
    let rmse_v = rmse(&y_sorted, &yhat_sorted)?;
    let pct = pct_err(&y_sorted, &yhat_sorted)?;

    Ok(EvaluationReport {
        model_name: name.to_string(),
        rmse: rmse_v,
        pct_err: pct,
        residuals,
        sorted_series,
        n: y.len(),
    })
}

impl EvaluationReport {
    /// `report_<model>.csv`: the sorted series with optional std bands.
    pub fn write_series_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut out = String::from("rank,observed,predicted,std_lower,std_upper\n");
        for p in &self.sorted_series {
            write!(out, "{},{},{}", p.rank, p.observed, p.predicted).expect("write to string");
            match (p.std_lower, p.std_upper) {
                (Some(lo), Some(hi)) => writeln!(out, ",{lo},{hi}").expect("write to string"),
                _ => out.push_str(",,\n"),
            }
        }
        write_file(path, &out)
    }

    /// `residuals_<model>.csv`: observed-minus-predicted in input order.
    pub fn write_residuals_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut out = String::from("index,residual\n");
        for (i, r) in self.residuals.iter().enumerate() {
            writeln!(out, "{i},{r}").expect("write to string");
        }
        write_file(path, &out)
    }

    /// Rebuild a report from its two CSV files plus the recomputable metrics.
    pub fn read_csv(
        model_name: &str,
        series_path: &Path,
        residuals_path: &Path,
    ) -> Result<Self, EvalError> {
        let series_text = read_file(series_path)?;
        let mut sorted_series = Vec::new();
        for (lineno, line) in series_text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(parse_err(series_path, lineno + 1, "expected 5 fields"));
            }
            let rank: usize = fields[0]
                .parse()
                .map_err(|_| parse_err(series_path, lineno + 1, "bad rank"))?;
            let observed: f64 = fields[1]
                .parse()
                .map_err(|_| parse_err(series_path, lineno + 1, "bad observed"))?;
            let predicted: f64 = fields[2]
                .parse()
                .map_err(|_| parse_err(series_path, lineno + 1, "bad predicted"))?;
            let band = |raw: &str| -> Result<Option<f64>, EvalError> {
                if raw.is_empty() {
                    Ok(None)
                } else {
                    raw.parse()
                        .map(Some)
                        .map_err(|_| parse_err(series_path, lineno + 1, "bad band"))
                }
            };
            sorted_series.push(SeriesPoint {
                rank,
                observed,
                predicted,
                std_lower: band(fields[3])?,
                std_upper: band(fields[4])?,
            });
        }

        let residual_text = read_file(residuals_path)?;
        let mut residuals = Vec::new();
        for (lineno, line) in residual_text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 2 {
                return Err(parse_err(residuals_path, lineno + 1, "expected 2 fields"));
            }
            residuals.push(
                fields[1]
                    .parse()
                    .map_err(|_| parse_err(residuals_path, lineno + 1, "bad residual"))?,
            );
        }

        let y: Vec<f64> = sorted_series.iter().map(|p| p.observed).collect();
        let yhat: Vec<f64> = sorted_series.iter().map(|p| p.predicted).collect();
        Ok(Self {
            model_name: model_name.to_string(),
            rmse: rmse(&y, &yhat)?,
            pct_err: pct_err(&y, &yhat)?,
            n: residuals.len(),
            residuals,
            sorted_series,
        })
    }
}

/// `scatter_<model>.csv`: observed and predicted life in input order.
pub fn write_scatter_csv(y: &[f64], yhat: &[f64], path: &Path) -> Result<(), EvalError> {
    check_lengths(y, yhat)?;
    let mut out = String::from("observed,predicted\n");
    for (a, b) in y.iter().zip(yhat) {
        writeln!(out, "{a},{b}").expect("write to string");
    }
    write_file(path, &out)
}

/// `metrics.csv`: one row per model, `model,rmse_cycles,pct_err`.
pub fn write_metrics_csv(reports: &[&EvaluationReport], path: &Path) -> Result<(), EvalError> {
    let mut out = String::from("model,rmse_cycles,pct_err\n");
    for r in reports {
        writeln!(out, "{},{},{}", r.model_name, r.rmse, r.pct_err).expect("write to string");
    }
    write_file(path, &out)
}

fn write_file(path: &Path, content: &str) -> Result<(), EvalError> {
    fs::write(path, content).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_file(path: &Path) -> Result<String, EvalError> {
    fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, message: &str) -> EvalError {
    EvalError::Parse {
        file: path.to_path_buf(),
        line,
        message: message.to_string(),
    }
}
