//! Bound verdicts over a finished run.
//!
//! Cumulative sums are truncated at the run length `L`, so a passing verdict
//! means the data are consistent with the bound, not that the infinite sum
//! obeys it.

use mdlseq::stats::{bootstrap_median_stderr, mean_stderr, median};
use mdlseq::{substream, ModelClass};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, PredictorKind};
use crate::records::{Row, RunRecord};

/// Bootstrap resamples used for median standard errors.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("predictor {predictor} rows lack column `{column}`")]
    MissingColumn {
        predictor: String,
        column: &'static str,
    },
    #[error("records come from run {found}, config hashes to run {expected}")]
    RunMismatch { expected: String, found: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Outcome of one bound check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub bound: String,
    pub predictor: String,
    /// Observed statistic (mean, maximum, median or fraction, see `bound`).
    pub statistic: f64,
    pub stderr: f64,
    pub limit: f64,
    /// Distance to the limit on the passing side; negative on failure.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub verdicts: Vec<Verdict>,
}

impl BoundReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

fn upper(
    bound: &str,
    predictor: &str,
    statistic: f64,
    stderr: f64,
    limit: f64,
    slack: f64,
) -> Verdict {
    let margin = limit + slack - statistic;
    Verdict {
        bound: bound.to_string(),
        predictor: predictor.to_string(),
        statistic,
        stderr,
        limit,
        margin,
        pass: margin >= 0.0,
    }
}

fn column<T: Copy>(
    rows: &[&Row],
    predictor: &str,
    name: &'static str,
    get: impl Fn(&Row) -> Option<T>,
) -> Result<Vec<T>, BoundsError> {
    rows.iter()
        .map(|r| get(r))
        .collect::<Option<Vec<T>>>()
        .ok_or(BoundsError::MissingColumn {
            predictor: predictor.to_string(),
            column: name,
        })
}

/// Per-trajectory `Σ_ℓ d_h` with compensated summation.
pub fn cumulative_dh(records: &RunRecord, predictor: &str) -> Result<Vec<f64>, BoundsError> {
    records
        .trajectories(predictor)
        .iter()
        .map(|rows| {
            let d = column(rows, predictor, "d_h", |r| r.d_h)?;
            Ok(mdlseq::scalar::sum_compensated(d))
        })
        .collect()
}

/// Per-trajectory value of `get` on the last row.
fn final_values<T: Copy>(
    records: &RunRecord,
    predictor: &str,
    name: &'static str,
    get: impl Fn(&Row) -> Option<T>,
) -> Result<Vec<T>, BoundsError> {
    records
        .trajectories(predictor)
        .iter()
        .map(|rows| {
            let last = rows.last().expect("trajectory has rows");
            get(last).ok_or(BoundsError::MissingColumn {
                predictor: predictor.to_string(),
                column: name,
            })
        })
        .collect()
}

/// Normalized prior weight of the truth over the enumerated class.
fn truth_weight(class: &ModelClass<f64>) -> f64 {
    let truth = class.truth().expect("config sets the truth");
    (-class.codelength(truth)).exp2() / class.kraft_mass(class.len())
}

/// Checks every bound that applies to the configured predictors.
///
/// * `mdl`, `map`: mean `Σ_ℓ d_h ≤ 21·h·2^{K(P)} + 4·se`.
/// * `bayes`: mean `Σ_ℓ d_h ≤ h·ln(1/w_P) + 4·se`.
/// * `elimination`: every trajectory has at most `h·(m-1)` errors, `m` the truth index.
/// * `majority`: every trajectory has at most `⌈log2(1/w_P)⌉` errors.
/// * `bayes-sample`: mean errors `≤ ln(1/w_P) + 4·se`.
/// * `discriminative-mdl` with values: the fraction of trajectories whose final
///   gap is within tolerance (plus four rollout standard errors when known)
///   reaches the configured fraction.
/// * with `epsilon` set, every `d_h` predictor ends with median `d_h < ε`.
pub fn check_bounds(
    records: &RunRecord,
    cfg: &ExperimentConfig,
) -> Result<BoundReport, BoundsError> {
    if let Some(found) = records.run_id() {
        let expected = cfg.run_id();
        if found != expected {
            return Err(BoundsError::RunMismatch {
                expected,
                found: found.to_string(),
            });
        }
    }
    let mut verdicts = Vec::new();
    if records.rows.is_empty() {
        return Ok(BoundReport { verdicts });
    }
    let class = cfg
        .sequence
        .as_ref()
        .map(|_| cfg.build_class())
        .transpose()?;
    let mut boot = substream(cfg.seed, u64::MAX);
    for p in &cfg.predictors {
        let label = p.label();
        let h = p.horizon as f64;
        match (p.kind, &class) {
            (PredictorKind::Mdl | PredictorKind::Map, Some(class)) => {
                let k = class.codelength(class.truth().expect("truth"));
                let (mean, se) = mean_stderr(&cumulative_dh(records, &label)?);
                verdicts.push(upper(
                    "cumulative-dh",
                    &label,
                    mean,
                    se,
                    21.0 * h * k.exp2(),
                    4.0 * se,
                ));
            }
            (PredictorKind::Bayes, Some(class)) => {
                let (mean, se) = mean_stderr(&cumulative_dh(records, &label)?);
                let limit = h * (1.0 / truth_weight(class)).ln();
                verdicts.push(upper("cumulative-dh", &label, mean, se, limit, 4.0 * se));
            }
            (PredictorKind::Elimination, Some(class)) => {
                let m = class.truth().expect("truth").get() as f64;
                let errors = final_values(records, &label, "errors_cum", |r| r.errors_cum)?;
                let worst = errors.iter().copied().max().unwrap_or(0) as f64;
                verdicts.push(upper(
                    "elimination-errors",
                    &label,
                    worst,
                    0.0,
                    h * (m - 1.0),
                    0.0,
                ));
            }
            (PredictorKind::Majority, Some(class)) => {
                let errors = final_values(records, &label, "errors_cum", |r| r.errors_cum)?;
                let worst = errors.iter().copied().max().unwrap_or(0) as f64;
                // Round away float noise before taking the ceiling.
                let limit = ((1.0 / truth_weight(class)).log2() - 1e-9).ceil();
                verdicts.push(upper("majority-errors", &label, worst, 0.0, limit, 0.0));
            }
            (PredictorKind::BayesSample, Some(class)) => {
                let errors = final_values(records, &label, "errors_cum", |r| r.errors_cum)?;
                let errors: Vec<f64> = errors.into_iter().map(|e| e as f64).collect();
                let (mean, se) = mean_stderr(&errors);
                let limit = (1.0 / truth_weight(class)).ln();
                verdicts.push(upper("expected-errors", &label, mean, se, limit, 4.0 * se));
            }
            (PredictorKind::DiscriminativeMdl, None) => {
                let Some(v) = cfg.interactive.as_ref().and_then(|i| i.values.as_ref()) else {
                    continue;
                };
                let finals = records
                    .trajectories(&label)
                    .iter()
                    .map(|rows| {
                        let last = rows.iter().rev().find(|r| r.value_gap.is_some());
                        last.map(|r| {
                            (
                                r.value_gap.unwrap_or(f64::NAN),
                                r.value_gap_stderr.unwrap_or(0.0),
                            )
                        })
                        .ok_or(BoundsError::MissingColumn {
                            predictor: label.clone(),
                            column: "value_gap",
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let within = finals
                    .iter()
                    .filter(|(gap, se)| *gap < v.gap_tolerance + 4.0 * se)
                    .count();
                let fraction = within as f64 / finals.len() as f64;
                let margin = fraction - v.gap_fraction;
                verdicts.push(Verdict {
                    bound: "value-gap".into(),
                    predictor: label.clone(),
                    statistic: fraction,
                    stderr: 0.0,
                    limit: v.gap_fraction,
                    margin,
                    pass: margin >= 0.0,
                });
            }
            _ => {}
        }
        if let (Some(eps), true) = (cfg.epsilon, has_dh(p.kind)) {
            let finals = final_values(records, &label, "d_h", |r| r.d_h)?;
            let med = median(&finals);
            let se = bootstrap_median_stderr(&finals, BOOTSTRAP_RESAMPLES, &mut boot);
            let margin = eps - med;
            verdicts.push(Verdict {
                bound: "final-median-dh".into(),
                predictor: label.clone(),
                statistic: med,
                stderr: se,
                limit: eps,
                margin,
                pass: margin > 0.0,
            });
        }
    }
    Ok(BoundReport { verdicts })
}

pub(crate) fn has_dh(kind: PredictorKind) -> bool {
    matches!(
        kind,
        PredictorKind::Mdl | PredictorKind::Map | PredictorKind::Bayes | PredictorKind::Mdli
    )
}
