//! MDL, MAP, Bayes-mixture and MDLI predictors, plus the elimination and
//! weighted-majority learners for deterministic classes.
//!
//! [`ClassTracker`] keeps `log2 Q_i(x)` for every enumerated model and is
//! advanced one symbol at a time; all probabilistic predictors are read off
//! it. The free functions ([`mdl_select`], [`bayes_predict`], ...) are
//! one-shot conveniences that replay a whole prefix.
//!
//! Codelength scores are `L_Q(x) = -log2 Q(x) + K(Q)` in bits; models with
//! `Q(x) = 0` get `+inf` and are never selected. Ties go to the lowest index.

use thiserror::Error;

use crate::measures::{Alphabet, LogProb, Measure, MeasureError, Predictive, Symbol};
use crate::model_class::{ClassError, ModelClass, ModelIndex};
use crate::scalar::{log2_sum_exp2, sum_compensated, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("every enumerated model assigns probability zero to the {len}-symbol prefix")]
    AllExcluded { len: usize },
    #[error(transparent)]
    Class(#[from] ClassError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("model {index} is not deterministic; elimination and majority need point-mass models")]
    NotDeterministic { index: usize },
    #[error("context of length {found} does not match the tracked prefix of length {expected}")]
    ContextMismatch { expected: usize, found: usize },
}

/// Result of an MDL selection.
#[derive(Clone, Debug, PartialEq)]
pub struct MdlSelection<T> {
    pub index: ModelIndex,
    /// `L` of the selected model, in bits.
    pub score_bits: T,
    /// `L_Q(x)` for every enumerated model, `+inf` when `Q(x) = 0`.
    pub scores: Vec<T>,
}

/// Running log-likelihoods of every model in a class along one prefix.
#[derive(Clone)]
pub struct ClassTracker<'a, T> {
    class: &'a ModelClass<T>,
    models: Vec<&'a Measure<T>>,
    /// Normalized `log2 w_i` with `w_i ∝ 2^{-K(Q_i)}`.
    log_prior: Vec<T>,
    log_lik: Vec<T>,
    len: usize,
    buf: Vec<T>,
}

impl<'a, T: Real> ClassTracker<'a, T> {
    /// Tracker at the empty prefix.
    pub fn new(class: &'a ModelClass<T>) -> Result<Self, PredictError> {
        let models = class.materialize()?;
        let neg_k: Vec<T> = class.codelengths().iter().map(|&k| -k).collect();
        let norm = log2_sum_exp2(&neg_k);
        Ok(ClassTracker {
            class,
            log_prior: neg_k.iter().map(|&v| v - norm).collect(),
            log_lik: vec![T::zero(); models.len()],
            models,
            len: 0,
            buf: vec![T::zero(); class.alphabet().size()],
        })
    }

    /// Tracker advanced over the whole prefix `x`.
    pub fn from_prefix(class: &'a ModelClass<T>, x: &[Symbol]) -> Result<Self, PredictError> {
        class.alphabet().validate(x)?;
        let mut tracker = Self::new(class)?;
        for t in 0..x.len() {
            tracker.observe(&x[..t], x[t])?;
        }
        Ok(tracker)
    }

    pub fn class(&self) -> &'a ModelClass<T> {
        self.class
    }

    /// Length of the prefix absorbed so far.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn model(&self, index: ModelIndex) -> &'a Measure<T> {
        self.models[index.slot()]
    }

    /// `log2 Q_i(x)` for every model.
    pub fn log_likelihoods(&self) -> &[T] {
        &self.log_lik
    }

    /// Normalized log-prior `log2 w_i`.
    pub fn log_prior(&self) -> &[T] {
        &self.log_prior
    }

    /// Absorbs `x_{ℓ+1} = symbol`, where `context` is the prefix seen so far.
    pub fn observe(&mut self, context: &[Symbol], symbol: Symbol) -> Result<(), PredictError> {
        if context.len() != self.len {
            return Err(PredictError::ContextMismatch {
                expected: self.len,
                found: context.len(),
            });
        }
        if !self.class.alphabet().contains(symbol) {
            return Err(MeasureError::SymbolOutOfRange {
                symbol,
                size: self.class.alphabet().size(),
            }
            .into());
        }
        for (model, ll) in self.models.iter().zip(self.log_lik.iter_mut()) {
            if *ll == T::neg_infinity() {
                continue;
            }
            model.conditional_into(context, &mut self.buf);
            let p = self.buf[symbol];
            *ll = if p > T::zero() {
                *ll + p.log2()
            } else {
                T::neg_infinity()
            };
        }
        self.len += 1;
        Ok(())
    }

    /// `L_Q(x)` for every model.
    pub fn scores(&self) -> Vec<T> {
        self.class
            .codelengths()
            .iter()
            .zip(&self.log_lik)
            .map(|(&k, &ll)| k - ll)
            .collect()
    }

    /// `MDL^x`: the model minimizing `L_Q(x)`.
    pub fn mdl(&self) -> Result<MdlSelection<T>, PredictError> {
        let scores = self.scores();
        let (slot, &score_bits) = scores
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_finite())
            .fold(None, |best: Option<(usize, &T)>, (i, s)| match best {
                Some((_, b)) if *b <= *s => best,
                _ => Some((i, s)),
            })
            .ok_or(PredictError::AllExcluded { len: self.len })?;
        Ok(MdlSelection {
            index: ModelIndex::from_slot(slot),
            score_bits,
            scores,
        })
    }

    /// `MAP^x`: the posterior mode under `w_Q = 2^{-K(Q)}`.
    ///
    /// The posterior is compared in unnormalized log form `log2 Q(x) - K(Q)`,
    /// which orders models exactly as the normalized posterior does.
    pub fn map(&self) -> Result<ModelIndex, PredictError> {
        self.class
            .codelengths()
            .iter()
            .zip(&self.log_lik)
            .map(|(&k, &ll)| ll - k)
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .fold(None, |best: Option<(usize, T)>, (i, v)| match best {
                Some((_, b)) if b >= v => best,
                _ => Some((i, v)),
            })
            .map(|(slot, _)| ModelIndex::from_slot(slot))
            .ok_or(PredictError::AllExcluded { len: self.len })
    }

    /// `log2 Bayes(x)` under the normalized prior.
    pub fn log_mixture(&self) -> LogProb<T> {
        LogProb::from_bits(log2_sum_exp2(&self.joint()))
    }

    fn joint(&self) -> Vec<T> {
        self.log_prior
            .iter()
            .zip(&self.log_lik)
            .map(|(&w, &ll)| w + ll)
            .collect()
    }

    /// `log2 Pr(Q_i | x)`.
    pub fn log_posterior(&self) -> Result<Vec<T>, PredictError> {
        let joint = self.joint();
        let norm = log2_sum_exp2(&joint);
        if norm == T::neg_infinity() {
            return Err(PredictError::AllExcluded { len: self.len });
        }
        Ok(joint.into_iter().map(|v| v - norm).collect())
    }

    /// `Pr(Q_i | x)`, summing to 1.
    pub fn posterior(&self) -> Result<Vec<T>, PredictError> {
        Ok(self
            .log_posterior()?
            .into_iter()
            .map(|v| v.exp2())
            .collect())
    }

    /// One-step Bayes predictive `Bayes(· | x)`; `context` must be the tracked prefix.
    pub fn bayes_distribution(&self, context: &[Symbol]) -> Result<Vec<T>, PredictError> {
        Ok(self.bayes_predictive()?.distribution_at(context))
    }

    /// The mixture conditioned on the tracked prefix, as a measure on continuations.
    pub fn bayes_predictive(&self) -> Result<BayesPredictive<'a, T>, PredictError> {
        let log_post = self.log_posterior()?;
        let (models, log_post): (Vec<_>, Vec<_>) = self
            .models
            .iter()
            .zip(log_post)
            .filter(|(_, lp)| *lp > T::neg_infinity())
            .map(|(m, lp)| (*m, lp))
            .unzip();
        Ok(BayesPredictive {
            alphabet: self.class.alphabet(),
            models,
            log_post,
            base: self.len,
        })
    }

    /// MDLI conditioned on the tracked prefix, as a measure on continuations.
    pub fn mdli_predictive(&self) -> MdliPredictive<'a, T> {
        MdliPredictive {
            alphabet: self.class.alphabet(),
            models: self.models.clone(),
            codelengths: self.class.codelengths().to_vec(),
            log_lik: self.log_lik.clone(),
            base: self.len,
        }
    }
}

/// `Bayes(· | x)` extended to blocks: contexts passed to
/// [`Predictive::conditional_into`] must start with the prefix the mixture
/// was conditioned on.
#[derive(Clone, Debug)]
pub struct BayesPredictive<'a, T> {
    alphabet: Alphabet,
    models: Vec<&'a Measure<T>>,
    log_post: Vec<T>,
    base: usize,
}

impl<T: Real> BayesPredictive<'_, T> {
    fn distribution_at(&self, context: &[Symbol]) -> Vec<T> {
        let mut out = vec![T::zero(); self.alphabet.size()];
        self.conditional_into(context, &mut out);
        out
    }

    /// Posterior weights over the surviving models at the conditioning prefix.
    pub fn weights(&self) -> Vec<T> {
        self.log_post.iter().map(|v| v.exp2()).collect()
    }
}

impl<T: Real> Predictive<T> for BayesPredictive<'_, T> {
    fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    fn conditional_into(&self, context: &[Symbol], out: &mut [T]) {
        debug_assert!(context.len() >= self.base);
        let mut buf = vec![T::zero(); self.alphabet.size()];
        let mut log_w = self.log_post.clone();
        if context.len() > self.base {
            for (model, lw) in self.models.iter().zip(log_w.iter_mut()) {
                for t in self.base..context.len() {
                    if *lw == T::neg_infinity() {
                        break;
                    }
                    model.conditional_into(&context[..t], &mut buf);
                    let p = buf[context[t]];
                    *lw = if p > T::zero() {
                        *lw + p.log2()
                    } else {
                        T::neg_infinity()
                    };
                }
            }
        }
        let norm = log2_sum_exp2(&log_w);
        out.iter_mut().for_each(|o| *o = T::zero());
        if norm == T::neg_infinity() {
            return;
        }
        for (model, lw) in self.models.iter().zip(&log_w) {
            let w = (*lw - norm).exp2();
            if w <= T::zero() {
                continue;
            }
            model.conditional_into(context, &mut buf);
            for (o, &p) in out.iter_mut().zip(&buf) {
                *o = *o + w * p;
            }
        }
    }

    fn check_context(&self, context: &[Symbol]) -> Result<(), MeasureError> {
        self.alphabet.validate(context)?;
        let mut buf = vec![T::zero(); self.alphabet.size()];
        let alive = self.models.iter().any(|m| {
            (self.base..context.len()).all(|t| {
                m.conditional_into(&context[..t], &mut buf);
                buf[context[t]] > T::zero()
            })
        });
        if alive {
            Ok(())
        } else {
            Err(MeasureError::UndefinedConditional { len: context.len() })
        }
    }
}

/// MDLI extended to blocks: each step uses the model selected on the prefix so far.
#[derive(Clone, Debug)]
pub struct MdliPredictive<'a, T> {
    alphabet: Alphabet,
    models: Vec<&'a Measure<T>>,
    codelengths: Vec<T>,
    log_lik: Vec<T>,
    base: usize,
}

impl<T: Real> MdliPredictive<'_, T> {
    fn select(&self, context: &[Symbol]) -> Option<usize> {
        let mut buf = vec![T::zero(); self.alphabet.size()];
        let mut best: Option<(usize, T)> = None;
        for (i, model) in self.models.iter().enumerate() {
            let mut ll = self.log_lik[i];
            for t in self.base..context.len() {
                if ll == T::neg_infinity() {
                    break;
                }
                model.conditional_into(&context[..t], &mut buf);
                let p = buf[context[t]];
                ll = if p > T::zero() {
                    ll + p.log2()
                } else {
                    T::neg_infinity()
                };
            }
            let score = self.codelengths[i] - ll;
            if score.is_finite() && best.is_none_or(|(_, b)| score < b) {
                best = Some((i, score));
            }
        }
        best.map(|(i, _)| i)
    }
}

impl<T: Real> Predictive<T> for MdliPredictive<'_, T> {
    fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    fn conditional_into(&self, context: &[Symbol], out: &mut [T]) {
        match self.select(context) {
            Some(i) => self.models[i].conditional_into(context, out),
            None => out.iter_mut().for_each(|o| *o = T::zero()),
        }
    }

    fn check_context(&self, context: &[Symbol]) -> Result<(), MeasureError> {
        self.alphabet.validate(context)?;
        // MDLI(x) > 0 needs every earlier selection to have predicted the symbol
        // that followed; the tracked part of the prefix is assumed valid.
        let mut buf = vec![T::zero(); self.alphabet.size()];
        for t in self.base..context.len() {
            self.conditional_into(&context[..t], &mut buf);
            if buf[context[t]] <= T::zero() {
                return Err(MeasureError::UndefinedConditional { len: context.len() });
            }
        }
        if self.select(context).is_none() {
            return Err(MeasureError::UndefinedConditional { len: context.len() });
        }
        Ok(())
    }
}

/// `MDL^x` over the prefix `x`.
pub fn mdl_select<T: Real>(
    class: &ModelClass<T>,
    x: &[Symbol],
) -> Result<MdlSelection<T>, PredictError> {
    ClassTracker::from_prefix(class, x)?.mdl()
}

/// `MDL^x(z | x)`: the selected model's block conditional.
pub fn mdl_predict<T: Real>(
    class: &ModelClass<T>,
    x: &[Symbol],
    z: &[Symbol],
) -> Result<T, PredictError> {
    let sel = mdl_select(class, x)?;
    Ok(class.model(sel.index)?.block_conditional(x, z)?)
}

/// `MAP^x`, always equal to [`mdl_select`]'s index.
pub fn map_select<T: Real>(
    class: &ModelClass<T>,
    x: &[Symbol],
) -> Result<ModelIndex, PredictError> {
    ClassTracker::from_prefix(class, x)?.map()
}

/// `Pr(Q | x)` over the enumerated models.
pub fn bayes_posterior<T: Real>(
    class: &ModelClass<T>,
    x: &[Symbol],
) -> Result<Vec<T>, PredictError> {
    ClassTracker::from_prefix(class, x)?.posterior()
}

/// `log2 Bayes(x)`.
pub fn log_bayes_mixture<T: Real>(
    class: &ModelClass<T>,
    x: &[Symbol],
) -> Result<LogProb<T>, PredictError> {
    Ok(ClassTracker::from_prefix(class, x)?.log_mixture())
}

/// `Bayes(z | x) = Σ_Q Pr(Q | x) Q(z | x)`.
pub fn bayes_predict<T: Real>(
    class: &ModelClass<T>,
    x: &[Symbol],
    z: &[Symbol],
) -> Result<T, PredictError> {
    class.alphabet().validate(z)?;
    let tracker = ClassTracker::from_prefix(class, x)?;
    let post = tracker.posterior()?;
    Ok(sum_compensated(
        class
            .indices()
            .zip(post)
            .filter(|(_, w)| *w > T::zero())
            .map(|(i, w)| {
                let q = tracker
                    .model(i)
                    .block_conditional(x, z)
                    .unwrap_or_else(|_| T::zero());
                w * q
            }),
    ))
}

/// One MDLI step: which model was used and the log-probability it gave.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MdliStep<T> {
    pub selected: ModelIndex,
    pub log_prob: LogProb<T>,
}

/// Running `log2 MDLI(x_{1:ℓ})` and the per-step selections.
#[derive(Clone, Debug, PartialEq)]
pub struct MdliState<T> {
    log_total: T,
    selections: Vec<ModelIndex>,
}

impl<T: Real> Default for MdliState<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> MdliState<T> {
    pub fn new() -> Self {
        MdliState {
            log_total: T::zero(),
            selections: Vec::new(),
        }
    }

    /// `log2 MDLI(x)` so far.
    pub fn log_mdli(&self) -> LogProb<T> {
        LogProb::from_bits(self.log_total)
    }

    pub fn selections(&self) -> &[ModelIndex] {
        &self.selections
    }

    /// Adds `log2 MDL^{x_{<t}}(x_t | x_{<t})`; `tracker` must sit at `x_{<t}`
    /// and is advanced over `x_t`.
    pub fn step(
        &mut self,
        tracker: &mut ClassTracker<'_, T>,
        context: &[Symbol],
        symbol: Symbol,
    ) -> Result<MdliStep<T>, PredictError> {
        if context.len() != tracker.len() {
            return Err(PredictError::ContextMismatch {
                expected: tracker.len(),
                found: context.len(),
            });
        }
        let selected = tracker.mdl()?.index;
        let p = tracker.model(selected).conditional_prob(context, symbol);
        tracker.observe(context, symbol)?;
        let log_prob = LogProb::from_prob(p);
        self.log_total = self.log_total + log_prob.bits();
        self.selections.push(selected);
        Ok(MdliStep { selected, log_prob })
    }
}

/// `log2 MDLI(x)` by replaying `x`.
pub fn mdli_log_prob<T: Real>(
    class: &ModelClass<T>,
    x: &[Symbol],
) -> Result<LogProb<T>, PredictError> {
    class.alphabet().validate(x)?;
    let mut tracker = ClassTracker::new(class)?;
    let mut state = MdliState::new();
    for t in 0..x.len() {
        state.step(&mut tracker, &x[..t], x[t])?;
    }
    Ok(state.log_mdli())
}

fn point_models<T: Real>(class: &ModelClass<T>) -> Result<Vec<&Measure<T>>, PredictError> {
    let models = class.materialize()?;
    if let Some(i) = models.iter().position(|m| !m.is_deterministic()) {
        return Err(PredictError::NotDeterministic { index: i + 1 });
    }
    Ok(models)
}

/// Outcome of one elimination or majority step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LearnerStep {
    /// Symbol predicted for the position just revealed.
    pub predicted: Symbol,
    /// Errors newly charged by this observation.
    pub new_errors: usize,
    pub errors: usize,
    pub alive: usize,
}

#[derive(Clone, Debug)]
struct PendingBlock {
    start: usize,
    block: Vec<Symbol>,
    charged: bool,
}

/// Elimination learner: predicts with the simplest model consistent with the
/// data so far.
///
/// With lookahead `h`, the learner issues a block prediction of
/// `x_{t:t+h-1}` at every step. A block counts as one error, charged when
/// its first wrong symbol is revealed.
#[derive(Clone, Debug)]
pub struct AliveSet<'a, T> {
    models: Vec<&'a Measure<T>>,
    alive: Vec<bool>,
    horizon: usize,
    time: usize,
    errors: usize,
    pending: Vec<PendingBlock>,
}

impl<'a, T: Real> AliveSet<'a, T> {
    pub fn new(class: &'a ModelClass<T>, horizon: usize) -> Result<Self, PredictError> {
        let models = point_models(class)?;
        Ok(AliveSet {
            alive: vec![true; models.len()],
            models,
            horizon: horizon.max(1),
            time: 0,
            errors: 0,
            pending: Vec::new(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn errors(&self) -> usize {
        self.errors
    }

    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|a| **a).count()
    }

    pub fn is_alive(&self, index: ModelIndex) -> bool {
        self.alive.get(index.slot()).copied().unwrap_or(false)
    }

    /// The simplest alive model.
    pub fn simplest(&self) -> Option<ModelIndex> {
        self.alive
            .iter()
            .position(|a| *a)
            .map(ModelIndex::from_slot)
    }

    fn symbol_of(&self, slot: usize, t: usize) -> Symbol {
        self.models[slot]
            .point_symbol(t)
            .expect("class checked deterministic")
    }

    /// Block the learner currently predicts for `x_{t:t+h-1}`.
    pub fn predict_block(&self) -> Result<Vec<Symbol>, PredictError> {
        let slot = self
            .simplest()
            .ok_or(PredictError::AllExcluded { len: self.time })?
            .slot();
        Ok((self.time..self.time + self.horizon)
            .map(|t| self.symbol_of(slot, t))
            .collect())
    }

    /// Issues the block prediction at the current time, reveals `x_t` and
    /// eliminates every model contradicting it.
    pub fn step(&mut self, symbol: Symbol) -> Result<LearnerStep, PredictError> {
        let block = self.predict_block()?;
        let predicted = block[0];
        self.pending.push(PendingBlock {
            start: self.time,
            block,
            charged: false,
        });
        let t = self.time;
        let mut new_errors = 0;
        for p in self.pending.iter_mut().filter(|p| !p.charged) {
            if p.block[t - p.start] != symbol {
                p.charged = true;
                new_errors += 1;
            }
        }
        let horizon = self.horizon;
        self.pending.retain(|p| p.start + horizon > t + 1);
        for slot in 0..self.models.len() {
            if self.alive[slot] && self.symbol_of(slot, t) != symbol {
                self.alive[slot] = false;
            }
        }
        self.time += 1;
        self.errors += new_errors;
        if self.alive_count() == 0 {
            return Err(PredictError::AllExcluded { len: self.time });
        }
        Ok(LearnerStep {
            predicted,
            new_errors,
            errors: self.errors,
            alive: self.alive_count(),
        })
    }
}

/// Weighted-majority learner for deterministic classes.
///
/// Predicts the symbol with the largest alive prior weight (ties to the
/// smallest symbol). On a binary alphabet the prediction carries at least
/// half the alive weight, so every error at least halves it.
#[derive(Clone, Debug)]
pub struct WeightedAliveSet<'a, T> {
    models: Vec<&'a Measure<T>>,
    weights: Vec<T>,
    alive: Vec<bool>,
    alphabet: Alphabet,
    time: usize,
    errors: usize,
}

/// A majority step together with the alive weight before and after.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MajorityStep<T> {
    pub step: LearnerStep,
    pub weight_before: T,
    pub weight_after: T,
}

impl<'a, T: Real> WeightedAliveSet<'a, T> {
    /// Weights `w_Q = 2^{-K(Q)}`, normalized over the enumerated class.
    pub fn new(class: &'a ModelClass<T>) -> Result<Self, PredictError> {
        let models = point_models(class)?;
        let raw: Vec<T> = class.codelengths().iter().map(|&k| (-k).exp2()).collect();
        let total = sum_compensated(raw.iter().copied());
        Ok(WeightedAliveSet {
            alive: vec![true; models.len()],
            weights: raw.into_iter().map(|w| w / total).collect(),
            models,
            alphabet: class.alphabet(),
            time: 0,
            errors: 0,
        })
    }

    pub fn errors(&self) -> usize {
        self.errors
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn alive_weight(&self) -> T {
        sum_compensated(
            self.weights
                .iter()
                .zip(&self.alive)
                .filter(|(_, a)| **a)
                .map(|(w, _)| *w),
        )
    }

    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|a| **a).count()
    }

    /// Weight-majority symbol for the current position.
    pub fn predict(&self) -> Symbol {
        let mut votes = vec![T::zero(); self.alphabet.size()];
        for (slot, model) in self.models.iter().enumerate() {
            if self.alive[slot] {
                let s = model
                    .point_symbol(self.time)
                    .expect("class checked deterministic");
                votes[s] = votes[s] + self.weights[slot];
            }
        }
        votes
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |best, (s, &v)| {
                if v > best.1 {
                    (s, v)
                } else {
                    best
                }
            })
            .0
    }

    pub fn step(&mut self, symbol: Symbol) -> Result<MajorityStep<T>, PredictError> {
        let predicted = self.predict();
        let weight_before = self.alive_weight();
        for (slot, model) in self.models.iter().enumerate() {
            if self.alive[slot]
                && model
                    .point_symbol(self.time)
                    .expect("class checked deterministic")
                    != symbol
            {
                self.alive[slot] = false;
            }
        }
        self.time += 1;
        let new_errors = usize::from(predicted != symbol);
        self.errors += new_errors;
        if self.alive_count() == 0 {
            return Err(PredictError::AllExcluded { len: self.time });
        }
        Ok(MajorityStep {
            step: LearnerStep {
                predicted,
                new_errors,
                errors: self.errors,
                alive: self.alive_count(),
            },
            weight_before,
            weight_after: self.alive_weight(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_class::ComplexityRule;

    fn explicit(models: Vec<Measure<f64>>, k: Vec<f64>) -> ModelClass<f64> {
        ModelClass::from_measures(models, ComplexityRule::Explicit { codelengths: k }).unwrap()
    }

    fn bern(theta: f64) -> Measure<f64> {
        Measure::bernoulli(theta).unwrap()
    }

    fn pair(k: f64, l: f64) -> ModelClass<f64> {
        explicit(vec![bern(0.5), bern(0.75)], vec![k, l])
    }

    fn ones() -> Measure<f64> {
        Measure::deterministic(Alphabet::BINARY, vec![], 1).unwrap()
    }

    fn zeros() -> Measure<f64> {
        Measure::deterministic(Alphabet::BINARY, vec![], 0).unwrap()
    }

    #[test]
    fn mdl_select_examples() {
        let sel = mdl_select(&pair(1.0, 1.0), &[1, 1]).unwrap();
        assert_eq!(sel.index.get(), 2);
        assert!((sel.scores[0] - 3.0).abs() < 1e-12);
        let l2 = 1.0 - 2.0 * 0.75f64.log2();
        assert!((sel.scores[1] - l2).abs() < 1e-12);
        assert!((l2 - 1.8301).abs() < 1e-4);

        let sel = mdl_select(&pair(0.0, 10.0), &[1, 1]).unwrap();
        assert_eq!(sel.index.get(), 1);
        assert!((sel.scores[1] - 10.8301).abs() < 1e-4);

        let class = explicit(vec![bern(0.5), bern(0.6), bern(0.7)], vec![0.0, 2.0, 4.0]);
        assert_eq!(mdl_select(&class, &[]).unwrap().index.get(), 1);
    }

    #[test]
    fn all_excluded_is_an_error() {
        let class = explicit(vec![ones(), ones()], vec![1.0, 1.0]);
        assert_eq!(
            mdl_select(&class, &[0]).unwrap_err(),
            PredictError::AllExcluded { len: 1 }
        );
        assert!(bayes_posterior(&class, &[1, 0]).is_err());
    }

    #[test]
    fn mdl_predict_examples() {
        let class = explicit(vec![ones(), Measure::ones_then_zeros(5)], vec![1.0, 2.0]);
        assert_eq!(mdl_predict(&class, &[1; 5], &[0]).unwrap(), 0.0);
        assert_eq!(mdl_select(&class, &[1; 5]).unwrap().index.get(), 1);
        assert_eq!(mdl_predict(&class, &[1, 1, 1, 1, 1, 0], &[0]).unwrap(), 1.0);
        let single = explicit(vec![bern(0.75)], vec![0.0]);
        assert_eq!(mdl_predict(&single, &[0, 1, 0], &[1]).unwrap(), 0.75);
    }

    #[test]
    fn map_examples() {
        assert_eq!(map_select(&pair(1.0, 1.0), &[1, 1]).unwrap().get(), 2);
        let tie = explicit(vec![bern(0.5), bern(0.5)], vec![1.0, 1.0]);
        assert_eq!(map_select(&tie, &[0, 1, 1]).unwrap().get(), 1);
        assert_eq!(mdl_select(&tie, &[0, 1, 1]).unwrap().index.get(), 1);
    }

    #[test]
    fn bayes_examples() {
        let post = bayes_posterior(&pair(1.0, 1.0), &[1, 1]).unwrap();
        assert!((post[0] - 4.0 / 13.0).abs() < 1e-12);
        assert!((post[1] - 9.0 / 13.0).abs() < 1e-12);
        let prior = bayes_posterior(&pair(1.0, 3.0), &[]).unwrap();
        assert!((prior[0] - 0.8).abs() < 1e-12);

        let p = bayes_predict(&pair(1.0, 1.0), &[1, 1], &[1]).unwrap();
        assert!((p - 35.0 / 52.0).abs() < 1e-12);

        let det = explicit(vec![ones(), zeros()], vec![1.0, 1.0]);
        assert_eq!(bayes_posterior(&det, &[1]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(bayes_predict(&det, &[], &[1]).unwrap(), 0.5);

        let single = explicit(vec![bern(0.3)], vec![0.0]);
        assert!((bayes_predict(&single, &[1, 0], &[1, 1]).unwrap() - 0.09).abs() < 1e-12);
    }

    #[test]
    fn bayes_predictive_extends_to_blocks() {
        let class = pair(1.0, 1.0);
        let x = [1, 0, 1];
        let tracker = ClassTracker::from_prefix(&class, &x).unwrap();
        let bp = tracker.bayes_predictive().unwrap();
        // Chain rule through the predictive must reproduce Bayes(xz)/Bayes(x).
        let mut ctx = x.to_vec();
        let mut prob = 1.0;
        let mut out = [0.0; 2];
        for &s in &[1, 1, 0] {
            bp.conditional_into(&ctx, &mut out);
            prob *= out[s];
            ctx.push(s);
        }
        let direct = bayes_predict(&class, &x, &[1, 1, 0]).unwrap();
        assert!((prob - direct).abs() < 1e-12);
    }

    #[test]
    fn mdli_examples() {
        let class = explicit(vec![ones(), Measure::ones_then_zeros(1)], vec![1.0, 2.0]);
        assert!(mdli_log_prob(&class, &[1, 0]).unwrap().is_impossible());

        let single = explicit(vec![bern(0.75)], vec![0.0]);
        let x = [1, 0, 1, 1];
        let a = mdli_log_prob(&single, &x).unwrap().bits();
        let b = single
            .model(ModelIndex::new(1).unwrap())
            .unwrap()
            .log_marginal(&x)
            .bits();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn elimination_examples() {
        let class = explicit(vec![ones(), Measure::ones_then_zeros(5)], vec![0.5, 2.0]);
        let mut learner = AliveSet::new(&class, 1).unwrap();
        let truth = [1, 1, 1, 1, 1, 0, 0, 0];
        let mut charged_at = vec![];
        for (t, &s) in truth.iter().enumerate() {
            let step = learner.step(s).unwrap();
            if step.new_errors > 0 {
                charged_at.push(t + 1);
            }
        }
        assert_eq!(learner.errors(), 1);
        assert_eq!(charged_at, vec![6]);
    }

    fn staircase(h: usize, m: usize) -> ModelClass<f64> {
        let models = (1..=m + 1)
            .map(|i| Measure::ones_then_zeros(i * h))
            .collect();
        ModelClass::from_measures(models, ComplexityRule::TwoLog).unwrap()
    }

    #[test]
    fn elimination_attains_h_times_m_minus_one() {
        for h in 1..=4 {
            for m in 1..=5 {
                let class = staircase(h, m);
                let truth = class.model(ModelIndex::new(m).unwrap()).unwrap().clone();
                let mut learner = AliveSet::new(&class, h).unwrap();
                for t in 0..(m + 3) * h {
                    learner.step(truth.point_symbol(t).unwrap()).unwrap();
                    assert!(learner.is_alive(ModelIndex::new(m).unwrap()));
                }
                assert_eq!(learner.errors(), h * (m - 1), "h={h} m={m}");
            }
        }
    }

    #[test]
    fn learners_reject_stochastic_classes() {
        assert_eq!(
            AliveSet::new(&pair(1.0, 1.0), 1).unwrap_err(),
            PredictError::NotDeterministic { index: 1 }
        );
        assert!(WeightedAliveSet::new(&pair(1.0, 1.0)).is_err());
    }

    #[test]
    fn majority_singleton_makes_no_errors() {
        let class = explicit(vec![Measure::ones_then_zeros(3)], vec![0.0]);
        let mut learner = WeightedAliveSet::new(&class).unwrap();
        for t in 0..10 {
            learner.step(usize::from(t < 3)).unwrap();
        }
        assert_eq!(learner.errors(), 0);
    }

    #[test]
    fn majority_tie_goes_to_zero() {
        let class = explicit(vec![ones(), zeros()], vec![1.0, 1.0]);
        let learner = WeightedAliveSet::new(&class).unwrap();
        assert_eq!(learner.predict(), 0);
    }
}
