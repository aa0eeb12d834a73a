//! Agents, environments and discriminative MDL.
//!
//! An agent picks action `y_t ~ π(· | x_{<t} y_{<t})`, then the environment
//! emits percept `x_t ~ ν(· | x_{<t} y_{1:t})`. A percept packs an observation
//! index and a reward index from a finite grid:
//! `percept = observation · |rewards| + reward_index`.
//!
//! Environments see the whole history and must be causal: the distribution
//! of `x_t` may depend on `y_{1:t}` only, even when later actions are passed.
//!
//! Discriminative MDL selects among a class of environments by the
//! conditional codelength `-log2 ν(x | y) + K(ν)`. Values are truncated
//! discounted reward sums under a fixed policy.

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{FamilySpec, Measure, MeasureError, Predictive, Symbol};
use crate::model_class::{ClassError, ComplexityRule, ModelClass, ModelIndex, DEFAULT_KRAFT_BOUND};
use crate::rng::{sample_index, shard_streams, substream};
use crate::scalar::{CompensatedSum, Real};

pub type Action = usize;

/// Default cap on enumerated histories for exact values and distances.
pub const DEFAULT_ENUMERATION_BUDGET: usize = 1 << 20;

const ROLLOUT_SHARDS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RlError {
    #[error("invalid {field}: {reason}")]
    InvalidSpec { field: String, reason: String },
    #[error("environment assigns probability zero to the history at step {step}")]
    ExcludedHistory { step: usize },
    #[error("every environment in the class excludes the history of length {len}")]
    AllExcluded { len: usize },
    #[error("discount {0} must lie in (0, 1)")]
    InvalidDiscount(f64),
    #[error("rollout count must be positive")]
    NoRollouts,
    #[error("enumeration of {terms} histories exceeds the budget of {budget}")]
    BudgetExceeded { terms: String, budget: usize },
    #[error("environment {index} has {found} {what}, class uses {expected}")]
    ShapeMismatch {
        index: usize,
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Class(#[from] ClassError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> RlError {
    RlError::InvalidSpec {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Observation count and reward grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PerceptSpace<T> {
    observations: usize,
    rewards: Vec<T>,
}

impl<T: Real> PerceptSpace<T> {
    pub fn new(observations: usize, rewards: Vec<T>) -> Result<Self, RlError> {
        if observations == 0 {
            return Err(invalid("observations", "need at least one observation"));
        }
        if rewards.is_empty() {
            return Err(invalid("rewards", "reward grid is empty"));
        }
        if let Some(r) = rewards
            .iter()
            .find(|r| !(**r >= T::zero() && **r <= T::one()))
        {
            return Err(invalid("rewards", format!("reward {r} outside [0, 1]")));
        }
        Ok(PerceptSpace {
            observations,
            rewards,
        })
    }

    /// One observation, rewards `{0, 1}`.
    pub fn binary_reward() -> Self {
        PerceptSpace {
            observations: 1,
            rewards: vec![T::zero(), T::one()],
        }
    }

    /// `observations` symbols, constant reward 0.
    pub fn observations_only(observations: usize) -> Self {
        PerceptSpace {
            observations,
            rewards: vec![T::zero()],
        }
    }

    pub fn size(&self) -> usize {
        self.observations * self.rewards.len()
    }

    pub fn observations(&self) -> usize {
        self.observations
    }

    pub fn rewards(&self) -> &[T] {
        &self.rewards
    }

    pub fn percept(&self, observation: usize, reward_index: usize) -> Symbol {
        observation * self.rewards.len() + reward_index
    }

    pub fn observation(&self, percept: Symbol) -> usize {
        percept / self.rewards.len()
    }

    pub fn reward(&self, percept: Symbol) -> T {
        self.rewards[percept % self.rewards.len()]
    }
}

/// Chronological conditional measure over percepts.
pub trait Environment<T: Real>: Send + Sync {
    fn num_actions(&self) -> usize;

    fn percept_space(&self) -> &PerceptSpace<T>;

    /// Writes `ν(· | x_{<t} y_{1:t})` where `t = percepts.len() + 1`.
    ///
    /// `actions` holds at least `t` entries; implementations read only
    /// `actions[..t]`.
    fn percept_distribution(&self, actions: &[Action], percepts: &[Symbol], out: &mut [T]);
}

/// Fixed policy `π(y_t | x_{<t} y_{<t})`.
pub trait Policy<T: Real>: Send + Sync {
    fn num_actions(&self) -> usize;

    /// Writes the action distribution given `actions = y_{<t}`, `percepts = x_{<t}`.
    fn action_distribution(&self, actions: &[Action], percepts: &[Symbol], out: &mut [T]);
}

/// Serializable description of a built-in environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvSpec {
    /// Reward 1 with probability `reward_probs[y_t]`.
    ActionBernoulli { reward_probs: Vec<f64> },
    /// Reward 1 with probability `p`, whatever the action.
    Bernoulli {
        p: f64,
        #[serde(default = "two")]
        actions: usize,
    },
    /// Reward 1 with probability `reward_probs[(y_1 + ... + y_{t-1}) mod 2]`.
    Parity {
        reward_probs: [f64; 2],
        #[serde(default = "two")]
        actions: usize,
    },
    /// Observation `x_t = table[y_t]`, no reward.
    Lookup {
        table: Vec<usize>,
        observations: usize,
    },
    /// Observations drawn from a sequence measure, ignoring actions; no reward.
    FromMeasure {
        measure: FamilySpec,
        #[serde(default = "two")]
        actions: usize,
    },
}

fn two() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq)]
enum EnvKind<T> {
    ActionBernoulli { reward_probs: Vec<T> },
    Parity { reward_probs: [T; 2] },
    Lookup { table: Vec<usize> },
    FromMeasure { measure: Measure<T> },
}

/// Built-in environment.
#[derive(Clone, Debug, PartialEq)]
pub struct BuiltinEnv<T> {
    actions: usize,
    space: PerceptSpace<T>,
    kind: EnvKind<T>,
}

fn check_prob(field: &str, p: f64) -> Result<(), RlError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(field, format!("probability {p} outside [0, 1]")))
    }
}

impl<T: Real> BuiltinEnv<T> {
    pub fn from_spec(spec: &EnvSpec) -> Result<Self, RlError> {
        match spec {
            EnvSpec::ActionBernoulli { reward_probs } => {
                if reward_probs.is_empty() {
                    return Err(invalid("reward_probs", "need at least one action"));
                }
                for (i, &p) in reward_probs.iter().enumerate() {
                    check_prob(&format!("reward_probs[{i}]"), p)?;
                }
                Ok(BuiltinEnv {
                    actions: reward_probs.len(),
                    space: PerceptSpace::binary_reward(),
                    kind: EnvKind::ActionBernoulli {
                        reward_probs: reward_probs.iter().map(|&p| T::lit(p)).collect(),
                    },
                })
            }
            EnvSpec::Bernoulli { p, actions } => {
                check_prob("p", *p)?;
                if *actions == 0 {
                    return Err(invalid("actions", "need at least one action"));
                }
                Ok(BuiltinEnv {
                    actions: *actions,
                    space: PerceptSpace::binary_reward(),
                    kind: EnvKind::ActionBernoulli {
                        reward_probs: vec![T::lit(*p); *actions],
                    },
                })
            }
            EnvSpec::Parity {
                reward_probs,
                actions,
            } => {
                check_prob("reward_probs[0]", reward_probs[0])?;
                check_prob("reward_probs[1]", reward_probs[1])?;
                if *actions == 0 {
                    return Err(invalid("actions", "need at least one action"));
                }
                Ok(BuiltinEnv {
                    actions: *actions,
                    space: PerceptSpace::binary_reward(),
                    kind: EnvKind::Parity {
                        reward_probs: [T::lit(reward_probs[0]), T::lit(reward_probs[1])],
                    },
                })
            }
            EnvSpec::Lookup {
                table,
                observations,
            } => {
                if table.is_empty() {
                    return Err(invalid("table", "need at least one action"));
                }
                if *observations < 2 {
                    return Err(invalid("observations", "need at least two observations"));
                }
                if let Some((i, o)) = table.iter().enumerate().find(|(_, o)| **o >= *observations) {
                    return Err(invalid(
                        format!("table[{i}]"),
                        format!("observation {o} outside 0..{observations}"),
                    ));
                }
                Ok(BuiltinEnv {
                    actions: table.len(),
                    space: PerceptSpace::observations_only(*observations),
                    kind: EnvKind::Lookup {
                        table: table.clone(),
                    },
                })
            }
            EnvSpec::FromMeasure { measure, actions } => {
                let measure: Measure<T> = measure.build()?;
                if *actions == 0 {
                    return Err(invalid("actions", "need at least one action"));
                }
                Ok(BuiltinEnv {
                    actions: *actions,
                    space: PerceptSpace::observations_only(measure.alphabet().size()),
                    kind: EnvKind::FromMeasure { measure },
                })
            }
        }
    }
}

impl<T: Real> Environment<T> for BuiltinEnv<T> {
    fn num_actions(&self) -> usize {
        self.actions
    }

    fn percept_space(&self) -> &PerceptSpace<T> {
        &self.space
    }

    fn percept_distribution(&self, actions: &[Action], percepts: &[Symbol], out: &mut [T]) {
        let t = percepts.len();
        let action = actions[t];
        out.iter_mut().for_each(|o| *o = T::zero());
        match &self.kind {
            EnvKind::ActionBernoulli { reward_probs } => {
                let p = reward_probs[action];
                out[0] = T::one() - p;
                out[1] = p;
            }
            EnvKind::Parity { reward_probs } => {
                let parity = actions[..t].iter().sum::<usize>() % 2;
                let p = reward_probs[parity];
                out[0] = T::one() - p;
                out[1] = p;
            }
            EnvKind::Lookup { table } => out[table[action]] = T::one(),
            EnvKind::FromMeasure { measure } => measure.conditional_into(percepts, out),
        }
    }
}

/// Serializable description of a built-in policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicySpec {
    Uniform {
        actions: usize,
    },
    /// The same action distribution at every step.
    Fixed {
        probs: Vec<f64>,
    },
    /// Plays `script` cyclically.
    Scripted {
        script: Vec<Action>,
        actions: usize,
    },
}

/// Built-in policy.
#[derive(Clone, Debug, PartialEq)]
pub enum BuiltinPolicy<T> {
    Fixed(Vec<T>),
    Scripted { script: Vec<Action>, actions: usize },
}

impl<T: Real> BuiltinPolicy<T> {
    pub fn from_spec(spec: &PolicySpec) -> Result<Self, RlError> {
        match spec {
            PolicySpec::Uniform { actions } => {
                if *actions == 0 {
                    return Err(invalid("actions", "need at least one action"));
                }
                Ok(BuiltinPolicy::Fixed(vec![
                    T::lit(1.0 / *actions as f64);
                    *actions
                ]))
            }
            PolicySpec::Fixed { probs } => {
                if probs.is_empty() {
                    return Err(invalid("probs", "need at least one action"));
                }
                for (i, &p) in probs.iter().enumerate() {
                    check_prob(&format!("probs[{i}]"), p)?;
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > crate::measures::NORMALIZATION_TOLERANCE {
                    return Err(invalid(
                        "probs",
                        format!("probabilities sum to {total}, not 1"),
                    ));
                }
                Ok(BuiltinPolicy::Fixed(
                    probs.iter().map(|&p| T::lit(p)).collect(),
                ))
            }
            PolicySpec::Scripted { script, actions } => {
                if script.is_empty() {
                    return Err(invalid("script", "script is empty"));
                }
                if let Some((i, a)) = script.iter().enumerate().find(|(_, a)| **a >= *actions) {
                    return Err(invalid(
                        format!("script[{i}]"),
                        format!("action {a} outside 0..{actions}"),
                    ));
                }
                Ok(BuiltinPolicy::Scripted {
                    script: script.clone(),
                    actions: *actions,
                })
            }
        }
    }
}

impl<T: Real> Policy<T> for BuiltinPolicy<T> {
    fn num_actions(&self) -> usize {
        match self {
            BuiltinPolicy::Fixed(p) => p.len(),
            BuiltinPolicy::Scripted { actions, .. } => *actions,
        }
    }

    fn action_distribution(&self, actions: &[Action], _percepts: &[Symbol], out: &mut [T]) {
        match self {
            BuiltinPolicy::Fixed(p) => out.copy_from_slice(p),
            BuiltinPolicy::Scripted { script, .. } => {
                out.iter_mut().for_each(|o| *o = T::zero());
                out[script[actions.len() % script.len()]] = T::one();
            }
        }
    }
}

/// Actions `y_1, y_2, ...` and percepts `x_1, x_2, ...`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionHistory {
    pub actions: Vec<Action>,
    pub percepts: Vec<Symbol>,
}

impl InteractionHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of completed cycles.
    pub fn len(&self) -> usize {
        self.percepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.percepts.is_empty()
    }

    /// Prefix of the first `len` cycles.
    pub fn truncated(&self, len: usize) -> InteractionHistory {
        InteractionHistory {
            actions: self.actions[..len].to_vec(),
            percepts: self.percepts[..len].to_vec(),
        }
    }

    pub fn rewards<T: Real>(&self, space: &PerceptSpace<T>) -> Vec<T> {
        self.percepts.iter().map(|&x| space.reward(x)).collect()
    }
}

/// Runs one cycle: `y ~ π`, then `x ~ ν`. Returns the reward.
pub fn interact_step<T, E, P, R>(
    env: &E,
    policy: &P,
    history: &mut InteractionHistory,
    rng: &mut R,
) -> T
where
    T: Real,
    E: Environment<T> + ?Sized,
    P: Policy<T> + ?Sized,
    R: Rng + ?Sized,
{
    let mut abuf = vec![T::zero(); policy.num_actions()];
    let mut xbuf = vec![T::zero(); env.percept_space().size()];
    cycle(env, policy, history, &mut abuf, &mut xbuf, rng)
}

fn cycle<T, E, P, R>(
    env: &E,
    policy: &P,
    history: &mut InteractionHistory,
    abuf: &mut [T],
    xbuf: &mut [T],
    rng: &mut R,
) -> T
where
    T: Real,
    E: Environment<T> + ?Sized,
    P: Policy<T> + ?Sized,
    R: Rng + ?Sized,
{
    policy.action_distribution(&history.actions, &history.percepts, abuf);
    let y = sample_index(abuf, rng).expect("policy distribution has positive mass");
    history.actions.push(y);
    env.percept_distribution(&history.actions, &history.percepts, xbuf);
    let x = sample_index(xbuf, rng).expect("percept distribution has positive mass");
    history.percepts.push(x);
    env.percept_space().reward(x)
}

/// Samples `steps` interaction cycles.
pub fn interact<T, E, P, R>(env: &E, policy: &P, steps: usize, rng: &mut R) -> InteractionHistory
where
    T: Real,
    E: Environment<T> + ?Sized,
    P: Policy<T> + ?Sized,
    R: Rng + ?Sized,
{
    let mut history = InteractionHistory::new();
    let mut abuf = vec![T::zero(); policy.num_actions()];
    let mut xbuf = vec![T::zero(); env.percept_space().size()];
    for _ in 0..steps {
        cycle(env, policy, &mut history, &mut abuf, &mut xbuf, rng);
    }
    history
}

/// `log2 ν(x_{1:ℓ} | y_{1:ℓ})`; actions beyond `ℓ` are ignored.
pub fn log_conditional<T: Real, E: Environment<T> + ?Sized>(
    env: &E,
    actions: &[Action],
    percepts: &[Symbol],
) -> T {
    let mut buf = vec![T::zero(); env.percept_space().size()];
    let mut total = T::zero();
    for t in 0..percepts.len() {
        env.percept_distribution(actions, &percepts[..t], &mut buf);
        let p = buf[percepts[t]];
        if p <= T::zero() {
            return T::neg_infinity();
        }
        total = total + p.log2();
    }
    total
}

/// A class of environments with codelengths.
#[derive(Clone, Debug)]
pub struct EnvironmentClass<T, E = BuiltinEnv<T>> {
    envs: Vec<E>,
    codelengths: Vec<T>,
    truth: Option<ModelIndex>,
}

impl<T: Real, E: Environment<T>> EnvironmentClass<T, E> {
    pub fn new(envs: Vec<E>, rule: ComplexityRule) -> Result<Self, RlError> {
        let first = envs.first().ok_or(ClassError::Empty)?;
        let (na, np) = (first.num_actions(), first.percept_space().size());
        for (i, e) in envs.iter().enumerate() {
            if e.num_actions() != na {
                return Err(RlError::ShapeMismatch {
                    index: i + 1,
                    what: "actions",
                    expected: na,
                    found: e.num_actions(),
                });
            }
            if e.percept_space().size() != np {
                return Err(RlError::ShapeMismatch {
                    index: i + 1,
                    what: "percepts",
                    expected: np,
                    found: e.percept_space().size(),
                });
            }
        }
        let codelengths = ModelClass::<T>::codelength_table(&rule, Some(envs.len()), envs.len())?;
        let mass: f64 = codelengths.iter().map(|k| (-k.as_f64()).exp2()).sum();
        if mass > DEFAULT_KRAFT_BOUND {
            return Err(ClassError::KraftViolation {
                mass,
                upto: envs.len(),
                bound: DEFAULT_KRAFT_BOUND,
            }
            .into());
        }
        Ok(EnvironmentClass {
            envs,
            codelengths,
            truth: None,
        })
    }

    pub fn with_truth(mut self, truth: usize) -> Result<Self, RlError> {
        self.truth = Some(
            ModelIndex::new(truth)
                .filter(|i| i.get() <= self.envs.len())
                .ok_or(ClassError::IndexOutOfRange {
                    index: truth,
                    len: self.envs.len(),
                })?,
        );
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn truth(&self) -> Option<ModelIndex> {
        self.truth
    }

    pub fn env(&self, index: ModelIndex) -> &E {
        &self.envs[index.slot()]
    }

    pub fn codelength(&self, index: ModelIndex) -> T {
        self.codelengths[index.slot()]
    }

    pub fn codelengths(&self) -> &[T] {
        &self.codelengths
    }

    pub fn num_actions(&self) -> usize {
        self.envs[0].num_actions()
    }

    pub fn percept_space(&self) -> &PerceptSpace<T> {
        self.envs[0].percept_space()
    }
}

/// Running conditional log-likelihoods `log2 ν_i(x | y)` over a class.
#[derive(Clone, Debug)]
pub struct DiscriminativeTracker<T> {
    log_lik: Vec<T>,
    len: usize,
    buf: Vec<T>,
}

impl<T: Real> DiscriminativeTracker<T> {
    pub fn new<E: Environment<T>>(class: &EnvironmentClass<T, E>) -> Self {
        DiscriminativeTracker {
            log_lik: vec![T::zero(); class.len()],
            len: 0,
            buf: vec![T::zero(); class.percept_space().size()],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn log_likelihoods(&self) -> &[T] {
        &self.log_lik
    }

    /// Absorbs every cycle of `history` not seen yet.
    pub fn update<E: Environment<T>>(
        &mut self,
        class: &EnvironmentClass<T, E>,
        history: &InteractionHistory,
    ) {
        for t in self.len..history.len() {
            let x = history.percepts[t];
            for (env, ll) in class.envs.iter().zip(self.log_lik.iter_mut()) {
                if *ll == T::neg_infinity() {
                    continue;
                }
                env.percept_distribution(&history.actions, &history.percepts[..t], &mut self.buf);
                let p = self.buf[x];
                *ll = if p > T::zero() {
                    *ll + p.log2()
                } else {
                    T::neg_infinity()
                };
            }
        }
        self.len = self.len.max(history.len());
    }

    /// `-log2 ν_i(x | y) + K(ν_i)` for every environment.
    pub fn scores<E: Environment<T>>(&self, class: &EnvironmentClass<T, E>) -> Vec<T> {
        class
            .codelengths
            .iter()
            .zip(&self.log_lik)
            .map(|(&k, &ll)| k - ll)
            .collect()
    }

    /// `MDL^{x|y}`, lowest index on ties.
    pub fn select<E: Environment<T>>(
        &self,
        class: &EnvironmentClass<T, E>,
    ) -> Result<(ModelIndex, T), RlError> {
        self.scores(class)
            .into_iter()
            .enumerate()
            .filter(|(_, s)| s.is_finite())
            .fold(None, |best: Option<(usize, T)>, (i, s)| match best {
                Some((_, b)) if b <= s => best,
                _ => Some((i, s)),
            })
            .map(|(slot, s)| (ModelIndex::from_slot(slot), s))
            .ok_or(RlError::AllExcluded { len: self.len })
    }
}

/// `MDL^{x|y}` over a whole history.
pub fn discriminative_select<T: Real, E: Environment<T>>(
    class: &EnvironmentClass<T, E>,
    history: &InteractionHistory,
) -> Result<ModelIndex, RlError> {
    let mut tracker = DiscriminativeTracker::new(class);
    tracker.update(class, history);
    Ok(tracker.select(class)?.0)
}

/// A truncated discounted value with its error terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValueEstimate<T> {
    pub value: T,
    /// Monte-Carlo standard error; zero for exact values.
    pub stderr: T,
    pub discount: T,
    pub horizon: usize,
    /// `γ^T / (1 - γ)`, the most the truncated tail can add.
    pub truncation_bound: T,
}

fn check_discount<T: Real>(gamma: T) -> Result<(), RlError> {
    if gamma > T::zero() && gamma < T::one() {
        Ok(())
    } else {
        Err(RlError::InvalidDiscount(gamma.as_f64()))
    }
}

/// `γ^T / (1 - γ)`.
pub fn truncation_bound<T: Real>(gamma: T, horizon: usize) -> T {
    gamma.powi(horizon as i32) / (T::one() - gamma)
}

/// Least `T` with `γ^T / (1 - γ) ≤ tolerance`.
pub fn horizon_for_tolerance<T: Real>(gamma: T, tolerance: T) -> Result<usize, RlError> {
    check_discount(gamma)?;
    if !(tolerance > T::zero()) {
        return Err(invalid("tolerance", "must be positive"));
    }
    let mut t = 0;
    while truncation_bound(gamma, t) > tolerance {
        t += 1;
    }
    Ok(t)
}

fn check_history<T: Real, E: Environment<T> + ?Sized>(
    env: &E,
    history: &InteractionHistory,
) -> Result<(), RlError> {
    let mut buf = vec![T::zero(); env.percept_space().size()];
    for t in 0..history.len() {
        env.percept_distribution(&history.actions, &history.percepts[..t], &mut buf);
        if buf[history.percepts[t]] <= T::zero() {
            return Err(RlError::ExcludedHistory { step: t + 1 });
        }
    }
    Ok(())
}

/// Monte-Carlo value `E[Σ_{k<T} γ^k r_{ℓ+1+k}]` of `policy` in `env` after `history`.
pub fn value_estimate<T, E, P, R>(
    env: &E,
    policy: &P,
    history: &InteractionHistory,
    gamma: T,
    horizon: usize,
    rollouts: usize,
    rng: &mut R,
) -> Result<ValueEstimate<T>, RlError>
where
    T: Real,
    E: Environment<T> + ?Sized,
    P: Policy<T> + ?Sized,
    R: RngCore + ?Sized,
{
    check_discount(gamma)?;
    if rollouts == 0 {
        return Err(RlError::NoRollouts);
    }
    check_history(env, history)?;
    let streams = shard_streams(rng, ROLLOUT_SHARDS);
    let shards: Vec<(CompensatedSum<T>, CompensatedSum<T>)> = streams
        .into_par_iter()
        .enumerate()
        .map(|(k, mut stream)| {
            let n = rollouts / ROLLOUT_SHARDS + usize::from(k < rollouts % ROLLOUT_SHARDS);
            let mut abuf = vec![T::zero(); policy.num_actions()];
            let mut xbuf = vec![T::zero(); env.percept_space().size()];
            let mut sum = CompensatedSum::new();
            let mut sum_sq = CompensatedSum::new();
            let mut h = history.clone();
            for _ in 0..n {
                h.actions.truncate(history.len());
                h.percepts.truncate(history.len());
                let mut ret = CompensatedSum::new();
                let mut discount = T::one();
                for _ in 0..horizon {
                    let r = cycle(env, policy, &mut h, &mut abuf, &mut xbuf, &mut stream);
                    ret.add(discount * r);
                    discount = discount * gamma;
                }
                let ret = ret.value();
                sum.add(ret);
                sum_sq.add(ret * ret);
            }
            (sum, sum_sq)
        })
        .collect();
    let mut sum = CompensatedSum::new();
    let mut sum_sq = CompensatedSum::new();
    for (s, s2) in &shards {
        sum.add(s.value());
        sum_sq.add(s2.value());
    }
    let n = T::lit(rollouts as f64);
    let mean = sum.value() / n;
    let stderr = if rollouts > 1 {
        (((sum_sq.value() - n * mean * mean) / (n - T::one())).max(T::zero()) / n).sqrt()
    } else {
        T::zero()
    };
    Ok(ValueEstimate {
        value: mean.max(T::zero()).min(T::one() / (T::one() - gamma)),
        stderr,
        discount: gamma,
        horizon,
        truncation_bound: truncation_bound(gamma, horizon),
    })
}

fn enumeration_check(branching: usize, horizon: usize, budget: usize) -> Result<(), RlError> {
    match u32::try_from(horizon)
        .ok()
        .and_then(|h| branching.checked_pow(h))
    {
        Some(n) if n <= budget => Ok(()),
        n => Err(RlError::BudgetExceeded {
            terms: n.map_or_else(|| format!("{branching}^{horizon}"), |n| n.to_string()),
            budget,
        }),
    }
}

/// Exact truncated value by enumerating every action/percept continuation.
pub fn value_exact<T, E, P>(
    env: &E,
    policy: &P,
    history: &InteractionHistory,
    gamma: T,
    horizon: usize,
    budget: usize,
) -> Result<ValueEstimate<T>, RlError>
where
    T: Real,
    E: Environment<T> + ?Sized,
    P: Policy<T> + ?Sized,
{
    check_discount(gamma)?;
    check_history(env, history)?;
    enumeration_check(
        policy.num_actions() * env.percept_space().size(),
        horizon,
        budget,
    )?;

    fn walk<T: Real, E: Environment<T> + ?Sized, P: Policy<T> + ?Sized>(
        env: &E,
        policy: &P,
        h: &mut InteractionHistory,
        depth: usize,
        horizon: usize,
        gamma: T,
        mass: T,
        acc: &mut CompensatedSum<T>,
    ) {
        if depth == horizon {
            return;
        }
        let mut abuf = vec![T::zero(); policy.num_actions()];
        let mut xbuf = vec![T::zero(); env.percept_space().size()];
        policy.action_distribution(&h.actions, &h.percepts, &mut abuf);
        let discount = gamma.powi(depth as i32);
        for (y, &py) in abuf.iter().enumerate() {
            if py <= T::zero() {
                continue;
            }
            h.actions.push(y);
            env.percept_distribution(&h.actions, &h.percepts, &mut xbuf);
            for (x, &px) in xbuf.iter().enumerate() {
                if px <= T::zero() {
                    continue;
                }
                let m = mass * py * px;
                acc.add(m * discount * env.percept_space().reward(x));
                h.percepts.push(x);
                walk(env, policy, h, depth + 1, horizon, gamma, m, acc);
                h.percepts.pop();
            }
            h.actions.pop();
        }
    }

    let mut acc = CompensatedSum::new();
    let mut h = history.clone();
    walk(env, policy, &mut h, 0, horizon, gamma, T::one(), &mut acc);
    Ok(ValueEstimate {
        value: acc.value(),
        stderr: T::zero(),
        discount: gamma,
        horizon,
        truncation_bound: truncation_bound(gamma, horizon),
    })
}

/// Values of the selected and true environments and their gap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValueGap<T> {
    pub selected: ModelIndex,
    pub value_selected: ValueEstimate<T>,
    pub value_true: ValueEstimate<T>,
    /// `|V_sel - V_true|`.
    pub gap: T,
    /// Combined rollout standard error of the two estimates.
    pub stderr: T,
}

/// `|V_{MDL^{x|y}} - V_P|` after `history`.
///
/// Both estimates use the same rollout stream, so when the selected
/// environment is the truth the gap is exactly zero.
#[allow(clippy::too_many_arguments)]
pub fn value_gap<T, E, P, R>(
    class: &EnvironmentClass<T, E>,
    truth: &E,
    policy: &P,
    history: &InteractionHistory,
    gamma: T,
    horizon: usize,
    rollouts: usize,
    rng: &mut R,
) -> Result<ValueGap<T>, RlError>
where
    T: Real,
    E: Environment<T>,
    P: Policy<T> + ?Sized,
    R: RngCore + ?Sized,
{
    let selected = discriminative_select(class, history)?;
    gap_for(
        class.env(selected),
        selected,
        truth,
        policy,
        history,
        gamma,
        horizon,
        rollouts,
        rng,
    )
}

/// [`value_gap`] for an already selected environment.
#[allow(clippy::too_many_arguments)]
pub fn gap_for<T, E, P, R>(
    selected_env: &E,
    selected: ModelIndex,
    truth: &E,
    policy: &P,
    history: &InteractionHistory,
    gamma: T,
    horizon: usize,
    rollouts: usize,
    rng: &mut R,
) -> Result<ValueGap<T>, RlError>
where
    T: Real,
    E: Environment<T>,
    P: Policy<T> + ?Sized,
    R: RngCore + ?Sized,
{
    let seed = rng.next_u64();
    let value_selected = value_estimate(
        selected_env,
        policy,
        history,
        gamma,
        horizon,
        rollouts,
        &mut substream(seed, 0),
    )?;
    let value_true = value_estimate(
        truth,
        policy,
        history,
        gamma,
        horizon,
        rollouts,
        &mut substream(seed, 0),
    )?;
    Ok(ValueGap {
        selected,
        gap: (value_selected.value - value_true.value).abs(),
        stderr: (value_selected.stderr.powi(2) + value_true.stderr.powi(2)).sqrt(),
        value_selected,
        value_true,
    })
}

/// `Σ |P(yx) - Q(yx)|` over the next `horizon` action/percept cycles, where
/// both joints use `policy` for actions.
pub fn joint_dh_exact<T, E1, E2, P>(
    p: &E1,
    q: &E2,
    policy: &P,
    history: &InteractionHistory,
    horizon: usize,
    budget: usize,
) -> Result<T, RlError>
where
    T: Real,
    E1: Environment<T> + ?Sized,
    E2: Environment<T> + ?Sized,
    P: Policy<T> + ?Sized,
{
    enumeration_check(
        policy.num_actions() * p.percept_space().size(),
        horizon,
        budget,
    )?;
    check_history(p, history)?;
    check_history(q, history)?;

    #[allow(clippy::too_many_arguments)]
    fn walk<
        T: Real,
        E1: Environment<T> + ?Sized,
        E2: Environment<T> + ?Sized,
        P: Policy<T> + ?Sized,
    >(
        p: &E1,
        q: &E2,
        policy: &P,
        h: &mut InteractionHistory,
        depth: usize,
        horizon: usize,
        pm: T,
        qm: T,
        acc: &mut CompensatedSum<T>,
    ) {
        if depth == horizon {
            acc.add((pm - qm).abs());
            return;
        }
        if pm <= T::zero() || qm <= T::zero() {
            acc.add(pm.max(T::zero()) + qm.max(T::zero()));
            return;
        }
        let k = p.percept_space().size();
        let mut abuf = vec![T::zero(); policy.num_actions()];
        let (mut pb, mut qb) = (vec![T::zero(); k], vec![T::zero(); k]);
        policy.action_distribution(&h.actions, &h.percepts, &mut abuf);
        for (y, &py) in abuf.iter().enumerate() {
            if py <= T::zero() {
                continue;
            }
            h.actions.push(y);
            p.percept_distribution(&h.actions, &h.percepts, &mut pb);
            q.percept_distribution(&h.actions, &h.percepts, &mut qb);
            for x in 0..k {
                h.percepts.push(x);
                walk(
                    p,
                    q,
                    policy,
                    h,
                    depth + 1,
                    horizon,
                    pm * py * pb[x],
                    qm * py * qb[x],
                    acc,
                );
                h.percepts.pop();
            }
            h.actions.pop();
        }
    }

    let mut acc = CompensatedSum::new();
    let mut h = history.clone();
    walk(
        p,
        q,
        policy,
        &mut h,
        0,
        horizon,
        T::one(),
        T::one(),
        &mut acc,
    );
    Ok(acc.value())
}
