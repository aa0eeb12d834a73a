//! Distances between predictive distributions.
//!
//! `d_h(P, Q | x) = Σ_{z ∈ X^h} |P(z | x) - Q(z | x)|` is computed exactly by
//! enumerating continuations (with pruning of zero-mass subtrees) or estimated
//! by Monte Carlo when `|X|^h` exceeds the enumeration budget. `d_h` grows
//! with `h` towards twice the total variation distance, which is never
//! computed directly.
//!
//! Also here: cumulative sums of per-step distances and the log-likelihood
//! ratio trace `log2 Q(x_{1:ℓ}) / P(x_{1:ℓ})`.

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{MeasureError, Predictive, Symbol};
use crate::rng::{sample_index, shard_streams};
use crate::scalar::{CompensatedSum, Real};

/// Default cap on `|X|^h` for exact enumeration.
pub const DEFAULT_EXACT_BUDGET: usize = 1 << 20;

/// Default Monte-Carlo sample count.
pub const DEFAULT_MC_SAMPLES: usize = 100_000;

const MC_SHARDS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("exact d_h needs {terms} continuations, over the budget of {budget}; use the Monte-Carlo estimator")]
    BudgetExceeded { terms: String, budget: usize },
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("Monte-Carlo estimate needs at least one sample")]
    NoSamples,
    #[error("alphabets differ: {left} vs {right} symbols")]
    AlphabetMismatch { left: usize, right: usize },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// How a `d_h` value was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Exact,
    #[serde(rename = "mc")]
    MonteCarlo,
}

impl Estimator {
    pub fn tag(self) -> &'static str {
        match self {
            Estimator::Exact => "exact",
            Estimator::MonteCarlo => "mc",
        }
    }
}

/// Estimator budgets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DhSettings {
    pub exact_budget: usize,
    pub mc_samples: usize,
}

impl Default for DhSettings {
    fn default() -> Self {
        DhSettings {
            exact_budget: DEFAULT_EXACT_BUDGET,
            mc_samples: DEFAULT_MC_SAMPLES,
        }
    }
}

/// One `d_h` evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDistance<T> {
    pub step: usize,
    pub value: T,
    /// Standard error, present for Monte-Carlo estimates.
    pub stderr: Option<T>,
    pub estimator: Estimator,
}

fn check_pair<T: Real, P: Predictive<T>, Q: Predictive<T>>(
    p: &P,
    q: &Q,
    x: &[Symbol],
    h: usize,
) -> Result<(), MetricError> {
    if h == 0 {
        return Err(MetricError::ZeroHorizon);
    }
    if p.alphabet() != q.alphabet() {
        return Err(MetricError::AlphabetMismatch {
            left: p.alphabet().size(),
            right: q.alphabet().size(),
        });
    }
    p.check_context(x)?;
    q.check_context(x)?;
    Ok(())
}

/// `|X|^h`, or `None` on overflow.
fn continuation_count(alphabet: usize, h: usize) -> Option<usize> {
    u32::try_from(h).ok().and_then(|h| alphabet.checked_pow(h))
}

struct Walk<'a, T, P, Q> {
    p: &'a P,
    q: &'a Q,
    h: usize,
    context: Vec<Symbol>,
    base: usize,
    p_bufs: Vec<Vec<T>>,
    q_bufs: Vec<Vec<T>>,
    acc: CompensatedSum<T>,
}

impl<T: Real, P: Predictive<T>, Q: Predictive<T>> Walk<'_, T, P, Q> {
    fn visit(&mut self, p_mass: T, q_mass: T) {
        let depth = self.context.len() - self.base;
        if depth == self.h {
            self.acc.add((p_mass - q_mass).abs());
            return;
        }
        // A subtree where one side has no mass contributes the other side's mass.
        if p_mass <= T::zero() || q_mass <= T::zero() {
            self.acc.add(p_mass.max(T::zero()) + q_mass.max(T::zero()));
            return;
        }
        let mut pb = std::mem::take(&mut self.p_bufs[depth]);
        let mut qb = std::mem::take(&mut self.q_bufs[depth]);
        self.p.conditional_into(&self.context, &mut pb);
        self.q.conditional_into(&self.context, &mut qb);
        for a in 0..pb.len() {
            self.context.push(a);
            self.visit(p_mass * pb[a], q_mass * qb[a]);
            self.context.pop();
        }
        self.p_bufs[depth] = pb;
        self.q_bufs[depth] = qb;
    }
}

/// Exact `d_h(P, Q | x)` by enumeration of `X^h`.
pub fn dh_exact<T, P, Q>(
    p: &P,
    q: &Q,
    x: &[Symbol],
    h: usize,
    budget: usize,
) -> Result<T, MetricError>
where
    T: Real,
    P: Predictive<T>,
    Q: Predictive<T>,
{
    check_pair(p, q, x, h)?;
    let k = p.alphabet().size();
    match continuation_count(k, h) {
        Some(n) if n <= budget => {}
        n => {
            return Err(MetricError::BudgetExceeded {
                terms: n.map_or_else(|| format!("{k}^{h}"), |n| n.to_string()),
                budget,
            })
        }
    }
    let mut walk = Walk {
        p,
        q,
        h,
        context: x.to_vec(),
        base: x.len(),
        p_bufs: vec![vec![T::zero(); k]; h],
        q_bufs: vec![vec![T::zero(); k]; h],
        acc: CompensatedSum::new(),
    };
    walk.visit(T::one(), T::one());
    let two = T::lit(2.0);
    Ok(walk.acc.value().max(T::zero()).min(two))
}

#[derive(Clone, Copy)]
struct Moments<T> {
    n: usize,
    sum: CompensatedSum<T>,
    sum_sq: CompensatedSum<T>,
}

fn mc_shard<T, P, Q, R>(p: &P, q: &Q, x: &[Symbol], h: usize, n: usize, rng: &mut R) -> Moments<T>
where
    T: Real,
    P: Predictive<T>,
    Q: Predictive<T>,
    R: Rng + ?Sized,
{
    let k = p.alphabet().size();
    let mut pb = vec![T::zero(); k];
    let mut qb = vec![T::zero(); k];
    let mut context = x.to_vec();
    let mut moments = Moments {
        n,
        sum: CompensatedSum::new(),
        sum_sq: CompensatedSum::new(),
    };
    for _ in 0..n {
        context.truncate(x.len());
        let from_p: bool = rng.gen();
        let (mut lp, mut lq) = (T::zero(), T::zero());
        for _ in 0..h {
            p.conditional_into(&context, &mut pb);
            q.conditional_into(&context, &mut qb);
            let source = if from_p { &pb } else { &qb };
            let a = sample_index(source, rng).expect("conditional has positive mass");
            lp = lp + pb[a].log2();
            lq = lq + qb[a].log2();
            context.push(a);
        }
        // |P - Q| / ((P + Q) / 2) written through r = min / max to stay in log space.
        let score = if lp == lq {
            T::zero()
        } else {
            let r = (lp.min(lq) - lp.max(lq)).exp2();
            T::lit(2.0) * (T::one() - r) / (T::one() + r)
        };
        moments.sum.add(score);
        moments.sum_sq.add(score * score);
    }
    moments
}

/// Monte-Carlo `d_h(P, Q | x)`: `(estimate, standard error)`.
///
/// Continuations are drawn from the even mixture of `P(·|x)` and `Q(·|x)` and
/// scored by `|P(z|x) - Q(z|x)| / M(z|x)`, which is unbiased and bounded by 2.
/// Samples are split over a fixed number of shards, each with its own stream
/// derived from `rng`, so the result does not depend on the thread count.
pub fn dh_monte_carlo<T, P, Q, R>(
    p: &P,
    q: &Q,
    x: &[Symbol],
    h: usize,
    samples: usize,
    rng: &mut R,
) -> Result<(T, T), MetricError>
where
    T: Real,
    P: Predictive<T> + Sync,
    Q: Predictive<T> + Sync,
    R: RngCore + ?Sized,
{
    check_pair(p, q, x, h)?;
    if samples == 0 {
        return Err(MetricError::NoSamples);
    }
    let streams = shard_streams(rng, MC_SHARDS);
    let shards: Vec<Moments<T>> = streams
        .into_par_iter()
        .enumerate()
        .map(|(k, mut stream)| {
            let n = samples / MC_SHARDS + usize::from(k < samples % MC_SHARDS);
            mc_shard(p, q, x, h, n, &mut stream)
        })
        .collect();
    let mut sum = CompensatedSum::new();
    let mut sum_sq = CompensatedSum::new();
    for m in &shards {
        sum.add(m.sum.value());
        sum_sq.add(m.sum_sq.value());
    }
    debug_assert_eq!(shards.iter().map(|m| m.n).sum::<usize>(), samples);
    let n = T::lit(samples as f64);
    let mean = sum.value() / n;
    let stderr = if samples > 1 {
        let var = ((sum_sq.value() - n * mean * mean) / (n - T::one())).max(T::zero());
        (var / n).sqrt()
    } else {
        T::zero()
    };
    Ok((mean.max(T::zero()).min(T::lit(2.0)), stderr))
}

/// Exact when `|X|^h` fits the budget, Monte Carlo otherwise.
pub fn dh_auto<T, P, Q, R>(
    p: &P,
    q: &Q,
    x: &[Symbol],
    h: usize,
    settings: DhSettings,
    rng: &mut R,
) -> Result<StepDistance<T>, MetricError>
where
    T: Real,
    P: Predictive<T> + Sync,
    Q: Predictive<T> + Sync,
    R: RngCore + ?Sized,
{
    match dh_exact(p, q, x, h, settings.exact_budget) {
        Ok(value) => Ok(StepDistance {
            step: x.len(),
            value,
            stderr: None,
            estimator: Estimator::Exact,
        }),
        Err(MetricError::BudgetExceeded { .. }) => {
            let (value, se) = dh_monte_carlo(p, q, x, h, settings.mc_samples, rng)?;
            Ok(StepDistance {
                step: x.len(),
                value,
                stderr: Some(se),
                estimator: Estimator::MonteCarlo,
            })
        }
        Err(e) => Err(e),
    }
}

/// Compensated running sums.
pub fn cumulative_sums<T: Real>(values: &[T]) -> Vec<T> {
    let mut acc = CompensatedSum::new();
    values
        .iter()
        .map(|&v| {
            acc.add(v);
            acc.value()
        })
        .collect()
}

/// Per-step distances of one predictor along one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceReport<T> {
    pub horizon: usize,
    pub steps: Vec<StepDistance<T>>,
    /// `Σ_{ℓ' ≤ ℓ} d_h` after each step.
    pub cumulative: Vec<T>,
    /// Cumulative error count after each step, for the deterministic learners.
    pub errors: Vec<usize>,
    acc: CompensatedSum<T>,
}

impl<T: Real> DistanceReport<T> {
    pub fn new(horizon: usize) -> Self {
        DistanceReport {
            horizon,
            steps: Vec::new(),
            cumulative: Vec::new(),
            errors: Vec::new(),
            acc: CompensatedSum::new(),
        }
    }

    pub fn push(&mut self, d: StepDistance<T>) {
        self.acc.add(d.value);
        self.cumulative.push(self.acc.value());
        self.steps.push(d);
    }

    pub fn push_errors(&mut self, cumulative_errors: usize) {
        self.errors.push(cumulative_errors);
    }

    pub fn total(&self) -> T {
        self.acc.value()
    }
}

/// Builds the report from per-step distances.
pub fn cumulative_dh<T: Real>(horizon: usize, steps: &[StepDistance<T>]) -> DistanceReport<T> {
    let mut report = DistanceReport::new(horizon);
    for d in steps {
        report.push(*d);
    }
    report
}

/// Running `log2 Q(x_{1:ℓ}) - log2 P(x_{1:ℓ})`, starting at 0 for `ℓ = 0`.
///
/// Once `Q` assigns probability zero the trace is absorbed at `-inf` and later
/// values are not computed.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRatioTrace<T> {
    values: Vec<T>,
    absorbed_at: Option<usize>,
    log_q: T,
    log_p: T,
}

/// Summary of a [`LogRatioTrace`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceSummary<T> {
    pub last: T,
    /// Sign changes of `trace - last` (zeros skipped).
    pub sign_changes: usize,
    pub window_max: T,
    pub window_min: T,
    pub absorbed_at: Option<usize>,
}

impl<T: Real> Default for LogRatioTrace<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> LogRatioTrace<T> {
    pub fn new() -> Self {
        LogRatioTrace {
            values: vec![T::zero()],
            absorbed_at: None,
            log_q: T::zero(),
            log_p: T::zero(),
        }
    }

    /// Appends one step given `Q(x_t | x_{<t})` and `P(x_t | x_{<t})`.
    pub fn push(&mut self, q_prob: T, p_prob: T) {
        if self.absorbed_at.is_some() {
            self.values.push(T::neg_infinity());
            return;
        }
        if q_prob <= T::zero() {
            self.absorbed_at = Some(self.values.len());
            self.values.push(T::neg_infinity());
            return;
        }
        self.log_q = self.log_q + q_prob.log2();
        self.log_p = self.log_p + p_prob.log2();
        self.values.push(self.log_q - self.log_p);
    }

    /// Value at every `ℓ = 0..=len`.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// First `ℓ` with `Q(x_{1:ℓ}) = 0`.
    pub fn absorbed_at(&self) -> Option<usize> {
        self.absorbed_at
    }

    pub fn last(&self) -> T {
        *self.values.last().expect("trace starts with ℓ = 0")
    }

    /// Summary over the whole trace, with extremes over the trailing `window` values.
    pub fn summary(&self, window: usize) -> TraceSummary<T> {
        let last = self.last();
        let mut sign_changes = 0;
        let mut prev_sign = 0i8;
        if last.is_finite() {
            for &v in &self.values {
                let d = v - last;
                let s = if d > T::zero() {
                    1
                } else if d < T::zero() {
                    -1
                } else {
                    0
                };
                if s != 0 {
                    if prev_sign != 0 && s != prev_sign {
                        sign_changes += 1;
                    }
                    prev_sign = s;
                }
            }
        }
        let tail = &self.values[self.values.len().saturating_sub(window.max(1))..];
        TraceSummary {
            last,
            sign_changes,
            window_max: tail.iter().copied().fold(T::neg_infinity(), T::max),
            window_min: tail.iter().copied().fold(T::infinity(), T::min),
            absorbed_at: self.absorbed_at,
        }
    }
}

/// Log-ratio trace of `q` against `p` along the prefix `x`.
pub fn log_ratio_trace<T, Q, P>(q: &Q, p: &P, x: &[Symbol]) -> LogRatioTrace<T>
where
    T: Real,
    Q: Predictive<T>,
    P: Predictive<T>,
{
    let k = p.alphabet().size();
    let mut qb = vec![T::zero(); k];
    let mut pb = vec![T::zero(); k];
    let mut trace = LogRatioTrace::new();
    for t in 0..x.len() {
        if trace.absorbed_at().is_none() {
            q.conditional_into(&x[..t], &mut qb);
            p.conditional_into(&x[..t], &mut pb);
        }
        trace.push(qb[x[t]], pb[x[t]]);
    }
    trace
}
