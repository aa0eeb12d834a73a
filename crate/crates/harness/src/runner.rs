//! Seeded trajectory runner.
//!
//! Trajectory `r` draws its data from `substream(seed, 2r)` and everything
//! else (Monte-Carlo distances, sampled predictions, rollouts) from
//! substreams of `substream(seed, 2r + 1)`, one per predictor. Trajectories
//! run on a worker pool and are merged in index order, so the output does
//! not depend on the number of workers.

use mdlseq::metrics::MetricError;
use mdlseq::predictors::ClassTracker;
use mdlseq::rl::{
    gap_for, horizon_for_tolerance, interact_step, DiscriminativeTracker, InteractionHistory,
};
use mdlseq::{
    dh_auto, substream, AliveSet, ModelClass, ModelIndex, PredictError, Predictive, RlError,
    Symbol, WeightedAliveSet,
};
use rand::{Rng, RngCore};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{
    ConfigError, ExperimentConfig, InteractiveSetup, PredictorConfig, PredictorKind,
};
use crate::records::{Row, RunRecord};

/// Environment variable read by the CLI for the default worker count.
pub const JOBS_ENV: &str = "MDLSIM_JOBS";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trajectory {trajectory}, step {step}, predictor {predictor}: {reason}")]
    Step {
        trajectory: usize,
        step: usize,
        predictor: String,
        reason: String,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

struct Ctx<'a> {
    trajectory: usize,
    predictor: &'a str,
}

impl Ctx<'_> {
    fn fail(&self, step: usize, reason: impl ToString) -> RunError {
        RunError::Step {
            trajectory: self.trajectory,
            step,
            predictor: self.predictor.to_string(),
            reason: reason.to_string(),
        }
    }
}

/// Runs every trajectory of `cfg` on `jobs` workers (rayon's default when `None`).
pub fn run_experiment(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<RunRecord, RunError> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| RunError::Pool(e.to_string()))?;
    let run_id = cfg.run_id();
    let per_trajectory: Vec<Vec<Row>> = if cfg.sequence.is_some() {
        let class = cfg.build_class()?;
        pool.install(|| {
            (0..cfg.trajectories)
                .into_par_iter()
                .map(|r| sequence_trajectory(cfg, &class, &run_id, r))
                .collect::<Result<_, _>>()
        })?
    } else {
        let setup = cfg.build_interactive()?;
        pool.install(|| {
            (0..cfg.trajectories)
                .into_par_iter()
                .map(|r| interactive_trajectory(cfg, &setup, &run_id, r))
                .collect::<Result<_, _>>()
        })?
    };
    Ok(RunRecord {
        rows: per_trajectory.into_iter().flatten().collect(),
    })
}

fn streams(
    seed: u64,
    r: usize,
    predictors: usize,
) -> (mdlseq::RandomStream, Vec<mdlseq::RandomStream>) {
    let data = substream(seed, 2 * r as u64);
    let aux_seed = substream(seed, 2 * r as u64 + 1).next_u64();
    let aux = (0..predictors as u64)
        .map(|j| substream(aux_seed, j))
        .collect();
    (data, aux)
}

enum SeqState<'a> {
    Mdl,
    Map,
    Bayes,
    Mdli { log_prob: f64 },
    Elimination(AliveSet<'a, f64>),
    Majority(WeightedAliveSet<'a, f64>),
    BayesSample { errors: usize },
}

fn sequence_trajectory(
    cfg: &ExperimentConfig,
    class: &ModelClass<f64>,
    run_id: &str,
    r: usize,
) -> Result<Vec<Row>, RunError> {
    let truth_idx = class.truth().expect("config sets the truth");
    let truth = class.model(truth_idx).map_err(|e| RunError::Step {
        trajectory: r,
        step: 0,
        predictor: "truth".into(),
        reason: e.to_string(),
    })?;
    let (mut data, mut aux) = streams(cfg.seed, r, cfg.predictors.len());
    let x = truth.sample_sequence(cfg.length, &mut data);
    let labels: Vec<String> = cfg.predictors.iter().map(PredictorConfig::label).collect();
    let ctx = |j: usize| Ctx {
        trajectory: r,
        predictor: &labels[j],
    };

    let mut tracker = ClassTracker::new(class).map_err(|e| ctx(0).fail(0, e))?;
    let mut states = Vec::with_capacity(cfg.predictors.len());
    for (j, p) in cfg.predictors.iter().enumerate() {
        states.push(match p.kind {
            PredictorKind::Mdl => SeqState::Mdl,
            PredictorKind::Map => SeqState::Map,
            PredictorKind::Bayes => SeqState::Bayes,
            PredictorKind::Mdli => SeqState::Mdli { log_prob: 0.0 },
            PredictorKind::Elimination => SeqState::Elimination(
                AliveSet::new(class, p.horizon).map_err(|e| ctx(j).fail(0, e))?,
            ),
            PredictorKind::Majority => {
                SeqState::Majority(WeightedAliveSet::new(class).map_err(|e| ctx(j).fail(0, e))?)
            }
            PredictorKind::BayesSample => SeqState::BayesSample { errors: 0 },
            PredictorKind::DiscriminativeMdl => unreachable!("rejected by validation"),
        });
    }

    let mut rows = Vec::with_capacity((cfg.length + 1) * states.len());
    for l in 0..=cfg.length {
        let prefix = &x[..l];
        let truth_ll = tracker.log_likelihoods()[truth_idx.slot()];
        for (j, (p, state)) in cfg.predictors.iter().zip(&mut states).enumerate() {
            let c = ctx(j);
            let mut row = Row::new(run_id, r, l, &labels[j], cfg.seed);
            match state {
                SeqState::Mdl | SeqState::Map => {
                    let sel = tracker.mdl().map_err(|e| c.fail(l, e))?;
                    let index = if matches!(state, SeqState::Map) {
                        tracker.map().map_err(|e| c.fail(l, e))?
                    } else {
                        sel.index
                    };
                    row.selected_index = Some(index.get());
                    row.score_bits = Some(sel.scores[index.slot()]);
                    row.log_ratio_bits = Some(tracker.log_likelihoods()[index.slot()] - truth_ll);
                    let q = tracker.model(index);
                    fill_dh(
                        &mut row,
                        dh_auto(
                            &Trusted(truth),
                            &Trusted(q),
                            prefix,
                            p.horizon,
                            cfg.estimator,
                            &mut aux[j],
                        ),
                        &c,
                    )?;
                }
                SeqState::Bayes => {
                    let mix = tracker.log_mixture().bits();
                    row.score_bits = Some(-mix);
                    row.log_ratio_bits = Some(mix - truth_ll);
                    let bayes = tracker.bayes_predictive().map_err(|e| c.fail(l, e))?;
                    fill_dh(
                        &mut row,
                        dh_auto(
                            &Trusted(truth),
                            &Trusted(&bayes),
                            prefix,
                            p.horizon,
                            cfg.estimator,
                            &mut aux[j],
                        ),
                        &c,
                    )?;
                }
                SeqState::Mdli { log_prob } => {
                    let sel = tracker.mdl().map_err(|e| c.fail(l, e))?;
                    row.selected_index = Some(sel.index.get());
                    row.score_bits = Some(-*log_prob);
                    row.log_ratio_bits = Some(*log_prob - truth_ll);
                    let mdli = tracker.mdli_predictive();
                    fill_dh(
                        &mut row,
                        dh_auto(
                            &Trusted(truth),
                            &Trusted(&mdli),
                            prefix,
                            p.horizon,
                            cfg.estimator,
                            &mut aux[j],
                        ),
                        &c,
                    )?;
                    if let Some(&s) = x.get(l) {
                        *log_prob += tracker.model(sel.index).conditional_prob(prefix, s).log2();
                    }
                }
                SeqState::Elimination(learner) => {
                    row.selected_index = learner.simplest().map(ModelIndex::get);
                    row.errors_cum = Some(learner.errors());
                    if let Some(&s) = x.get(l) {
                        learner.step(s).map_err(|e| c.fail(l + 1, e))?;
                    }
                }
                SeqState::Majority(learner) => {
                    row.errors_cum = Some(learner.errors());
                    if let Some(&s) = x.get(l) {
                        learner.step(s).map_err(|e| c.fail(l + 1, e))?;
                    }
                }
                SeqState::BayesSample { errors } => {
                    let mix = tracker.log_mixture().bits();
                    row.score_bits = Some(-mix);
                    row.log_ratio_bits = Some(mix - truth_ll);
                    row.errors_cum = Some(*errors);
                    if let Some(&s) = x.get(l) {
                        let dist = tracker
                            .bayes_distribution(prefix)
                            .map_err(|e| c.fail(l, e))?;
                        let guess = sample_symbol(&dist, &mut aux[j]);
                        *errors += usize::from(guess != s);
                    }
                }
            }
            rows.push(row);
        }
        if let Some(&s) = x.get(l) {
            tracker
                .observe(prefix, s)
                .map_err(|e: PredictError| ctx(0).fail(l + 1, e))?;
        }
    }
    Ok(rows)
}

/// Skips [`Predictive::check_context`], which rescans the whole prefix. The
/// runner only conditions on prefixes sampled from the truth, which every
/// evaluated predictor gives positive mass.
struct Trusted<P>(P);

impl<P: Predictive<f64>> Predictive<f64> for Trusted<P> {
    fn alphabet(&self) -> mdlseq::Alphabet {
        self.0.alphabet()
    }

    fn conditional_into(&self, context: &[Symbol], out: &mut [f64]) {
        self.0.conditional_into(context, out)
    }
}

fn sample_symbol<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> Symbol {
    mdlseq::rng::sample_index(dist, rng).expect("predictive distribution has positive mass")
}

fn fill_dh(
    row: &mut Row,
    d: Result<mdlseq::StepDistance<f64>, MetricError>,
    c: &Ctx<'_>,
) -> Result<(), RunError> {
    let d = d.map_err(|e| c.fail(row.step, e))?;
    row.d_h = Some(d.value);
    row.d_h_stderr = d.stderr;
    row.estimator = Some(d.estimator.tag().to_string());
    Ok(())
}

fn interactive_trajectory(
    cfg: &ExperimentConfig,
    setup: &InteractiveSetup,
    run_id: &str,
    r: usize,
) -> Result<Vec<Row>, RunError> {
    let inter = cfg.interactive.as_ref().expect("interactive config");
    let truth_slot = inter.truth - 1;
    let (mut data, mut aux) = streams(cfg.seed, r, cfg.predictors.len());
    let labels: Vec<String> = cfg.predictors.iter().map(PredictorConfig::label).collect();
    let values = match &inter.values {
        Some(v) => {
            let horizon = match v.horizon {
                Some(t) => t,
                None => horizon_for_tolerance(v.gamma, v.truncation_tolerance)
                    .map_err(|e| crate::config::rl_error("interactive.values", e))?,
            };
            Some((v, horizon))
        }
        None => None,
    };

    let mut history = InteractionHistory::new();
    let mut trackers: Vec<DiscriminativeTracker<f64>> = cfg
        .predictors
        .iter()
        .map(|_| DiscriminativeTracker::new(&setup.class))
        .collect();
    let mut rows = Vec::with_capacity((cfg.length + 1) * labels.len());
    for l in 0..=cfg.length {
        for (j, tracker) in trackers.iter_mut().enumerate() {
            let c = Ctx {
                trajectory: r,
                predictor: &labels[j],
            };
            tracker.update(&setup.class, &history);
            let (sel, score) = tracker.select(&setup.class).map_err(|e| c.fail(l, e))?;
            let ll = tracker.log_likelihoods();
            let mut row = Row::new(run_id, r, l, &labels[j], cfg.seed);
            row.selected_index = Some(sel.get());
            row.score_bits = Some(score);
            row.log_ratio_bits = Some(ll[sel.slot()] - ll[truth_slot]);
            if let Some((v, horizon)) = values {
                if l % v.every == 0 || l == cfg.length {
                    let gap = gap_for(
                        setup.class.env(sel),
                        sel,
                        &setup.truth,
                        &setup.policy,
                        &history,
                        v.gamma,
                        horizon,
                        v.rollouts,
                        &mut aux[j],
                    )
                    .map_err(|e: RlError| c.fail(l, e))?;
                    row.value_sel = Some(gap.value_selected.value);
                    row.value_true = Some(gap.value_true.value);
                    row.value_gap = Some(gap.gap);
                    row.value_gap_stderr = Some(gap.stderr);
                }
            }
            rows.push(row);
        }
        if l < cfg.length {
            interact_step(&setup.truth, &setup.policy, &mut history, &mut data);
        }
    }
    Ok(rows)
}
