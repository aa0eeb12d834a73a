//! Experiment harness for the `mdlseq` predictors.
//!
//! A run takes an [`ExperimentConfig`], samples `R` seeded trajectories from
//! the true measure (or environment), evaluates every configured predictor at
//! each step `ℓ = 0..=L` and collects the rows into a [`RunRecord`]. The
//! records can then be checked against the known bounds ([`check_bounds`]),
//! summarized ([`summarize`]) and written to disk ([`emit_report`]).

pub mod bounds;
pub mod config;
pub mod records;
pub mod report;
pub mod runner;
pub mod scenarios;

pub use bounds::{check_bounds, BoundReport, BoundsError, Verdict};
pub use config::{ConfigError, ExperimentConfig, PredictorConfig, PredictorKind};
pub use records::{Format, RecordsError, Row, RunRecord, COLUMNS};
pub use report::{emit_report, summarize, ReportError, Summary};
pub use runner::{run_experiment, RunError, JOBS_ENV};
pub use scenarios::{Scenario, SCENARIOS};
