//! Summary documents and on-disk output.

use std::path::{Path, PathBuf};

use mdlseq::stats::{bootstrap_median_stderr, mean_stderr, median};
use mdlseq::substream;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{BoundReport, Verdict, BOOTSTRAP_RESAMPLES};
use crate::config::default_checkpoints;
use crate::records::{Format, RecordsError, Row, RunRecord};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Records(#[from] RecordsError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: usize,
    pub median_dh: f64,
    /// Bootstrap standard error of the median.
    pub stderr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipStats {
    pub median: f64,
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowStat {
    /// First step of the window; the window ends at the last step.
    pub from_step: usize,
    pub median_dh: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub stderr: f64,
    pub max: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub step: usize,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorSummary {
    pub predictor: String,
    pub trajectories: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cumulative_dh: Option<MeanStderr>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<Checkpoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_window: Option<WindowStat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection_flips: Option<FlipStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub errors: Option<ErrorStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_gap: Option<GapStats>,
}

/// The structured summary written next to the records.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub rows: usize,
    pub version: String,
    pub predictors: Vec<PredictorSummary>,
    pub verdicts: Vec<Verdict>,
}

/// Selection changes along one trajectory.
pub fn selection_flips(rows: &[&Row]) -> usize {
    let selections: Vec<usize> = rows.iter().filter_map(|r| r.selected_index).collect();
    selections.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Summarizes `records`. Checkpoints default to `L/10, L/2, L`; the final
/// window is the last tenth of the steps.
pub fn summarize(
    records: &RunRecord,
    checkpoints: Option<&[usize]>,
    bootstrap_seed: u64,
) -> Summary {
    let mut boot = substream(bootstrap_seed, u64::MAX - 1);
    let predictors = records
        .predictors()
        .into_iter()
        .map(|label| summarize_predictor(records, label, checkpoints, &mut boot))
        .collect();
    Summary {
        run_id: records.run_id().map(str::to_string),
        seed: records.rows.first().map(|r| r.seed),
        rows: records.rows.len(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        predictors,
        ..Summary::default()
    }
}

fn summarize_predictor(
    records: &RunRecord,
    label: String,
    checkpoints: Option<&[usize]>,
    boot: &mut mdlseq::RandomStream,
) -> PredictorSummary {
    let trajectories = records.trajectories(&label);
    let length = trajectories
        .iter()
        .filter_map(|t| t.last().map(|r| r.step))
        .max()
        .unwrap_or(0);
    let has_dh = trajectories.iter().flatten().all(|r| r.d_h.is_some());

    let mut summary = PredictorSummary {
        predictor: label.clone(),
        trajectories: trajectories.len(),
        cumulative_dh: None,
        checkpoints: Vec::new(),
        final_window: None,
        selection_flips: None,
        errors: None,
        value_gap: None,
    };

    if has_dh {
        let sums: Vec<f64> = trajectories
            .iter()
            .map(|t| mdlseq::scalar::sum_compensated(t.iter().filter_map(|r| r.d_h)))
            .collect();
        let (mean, stderr) = mean_stderr(&sums);
        summary.cumulative_dh = Some(MeanStderr { mean, stderr });
        let steps = checkpoints.map_or_else(|| default_checkpoints(length), <[usize]>::to_vec);
        for step in steps.into_iter().filter(|&s| s <= length) {
            let values: Vec<f64> = trajectories
                .iter()
                .filter_map(|t| t.iter().find(|r| r.step == step).and_then(|r| r.d_h))
                .collect();
            summary.checkpoints.push(Checkpoint {
                step,
                median_dh: median(&values),
                stderr: bootstrap_median_stderr(&values, BOOTSTRAP_RESAMPLES, boot),
            });
        }
        let from_step = length + 1 - ((length + 1) / 10).max(1);
        let window: Vec<f64> = trajectories
            .iter()
            .flatten()
            .filter(|r| r.step >= from_step)
            .filter_map(|r| r.d_h)
            .collect();
        summary.final_window = Some(WindowStat {
            from_step,
            median_dh: median(&window),
        });
    }

    if trajectories
        .iter()
        .flatten()
        .any(|r| r.selected_index.is_some())
    {
        let flips: Vec<usize> = trajectories.iter().map(|t| selection_flips(t)).collect();
        let as_f64: Vec<f64> = flips.iter().map(|&f| f as f64).collect();
        summary.selection_flips = Some(FlipStats {
            median: median(&as_f64),
            mean: mean_stderr(&as_f64).0,
            min: flips.iter().copied().min().unwrap_or(0),
            max: flips.iter().copied().max().unwrap_or(0),
        });
    }

    let final_errors: Vec<usize> = trajectories
        .iter()
        .filter_map(|t| t.last().and_then(|r| r.errors_cum))
        .collect();
    if !final_errors.is_empty() {
        let as_f64: Vec<f64> = final_errors.iter().map(|&e| e as f64).collect();
        let (mean, stderr) = mean_stderr(&as_f64);
        summary.errors = Some(ErrorStats {
            mean,
            stderr,
            max: final_errors.iter().copied().max().unwrap_or(0),
        });
    }

    let gaps: Vec<(usize, f64)> = trajectories
        .iter()
        .filter_map(|t| {
            t.iter()
                .rev()
                .find_map(|r| r.value_gap.map(|g| (r.step, g)))
        })
        .collect();
    if !gaps.is_empty() {
        let values: Vec<f64> = gaps.iter().map(|g| g.1).collect();
        summary.value_gap = Some(GapStats {
            step: gaps.iter().map(|g| g.0).max().unwrap_or(0),
            mean: mean_stderr(&values).0,
            median: median(&values),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    summary
}

/// Paths written by [`emit_report`].
#[derive(Clone, Debug, PartialEq)]
pub struct ReportPaths {
    pub records: PathBuf,
    pub summary: PathBuf,
}

/// Writes `records.<csv|json>` and `summary.json` into `dir`.
pub fn emit_report(
    records: &RunRecord,
    summary: &Summary,
    dir: &Path,
    format: Format,
) -> Result<ReportPaths, ReportError> {
    std::fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let paths = ReportPaths {
        records: dir.join(format!("records.{}", format.extension())),
        summary: dir.join("summary.json"),
    };
    records.save(&paths.records, format)?;
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    std::fs::write(&paths.summary, text).map_err(|source| ReportError::Io {
        path: paths.summary.display().to_string(),
        source,
    })?;
    Ok(paths)
}

/// Attaches verdicts and config metadata to a summary.
pub fn with_verdicts(
    mut summary: Summary,
    report: &BoundReport,
    cfg: &crate::config::ExperimentConfig,
) -> Summary {
    summary.config_hash = Some(cfg.hash());
    summary.name = Some(cfg.name.clone());
    summary.seed = Some(cfg.seed);
    summary.verdicts = report.verdicts.clone();
    summary
}
