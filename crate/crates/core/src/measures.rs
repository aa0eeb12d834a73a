//! Measures on sequences over a finite alphabet.
//!
//! A [`Measure`] is specified by its one-step predictive distributions
//! `Q(a | x)`; probabilities of whole prefixes follow from the chain rule.
//! Measures are immutable: conditioning is always by argument, so one value
//! can be shared by any number of concurrent trajectories.
//!
//! Log-probabilities are base 2 throughout ([`LogProb`]), with an explicit
//! `-inf` for probability zero.

use std::fmt;
use std::ops::Add;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::sample_index;
use crate::scalar::Real;

/// Index of a symbol in `0..alphabet.size()`.
pub type Symbol = usize;

/// Absolute tolerance for "sums to one".
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("alphabet size {0} is below 2")]
    AlphabetTooSmall(usize),
    #[error("symbol {symbol} out of range for alphabet of size {size}")]
    SymbolOutOfRange { symbol: Symbol, size: usize },
    #[error("conditional undefined: prefix of length {len} has probability zero")]
    UndefinedConditional { len: usize },
    #[error("invalid family spec: {field}: {reason}")]
    InvalidSpec { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> MeasureError {
    MeasureError::InvalidSpec {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Finite observation alphabet `{0, .., size-1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Alphabet(usize);

impl Alphabet {
    pub const BINARY: Alphabet = Alphabet(2);

    pub fn new(size: usize) -> Result<Self, MeasureError> {
        if size < 2 {
            return Err(MeasureError::AlphabetTooSmall(size));
        }
        Ok(Alphabet(size))
    }

    pub fn size(self) -> usize {
        self.0
    }

    pub fn contains(self, symbol: Symbol) -> bool {
        symbol < self.0
    }

    /// Checks every symbol of `x` against the alphabet.
    pub fn validate(self, x: &[Symbol]) -> Result<(), MeasureError> {
        match x.iter().find(|&&s| !self.contains(s)) {
            Some(&symbol) => Err(MeasureError::SymbolOutOfRange {
                symbol,
                size: self.0,
            }),
            None => Ok(()),
        }
    }
}

impl TryFrom<usize> for Alphabet {
    type Error = MeasureError;
    fn try_from(size: usize) -> Result<Self, Self::Error> {
        Alphabet::new(size)
    }
}

impl From<Alphabet> for usize {
    fn from(a: Alphabet) -> usize {
        a.0
    }
}

/// Base-2 log-probability. `-inf` is the distinguished "probability zero".
///
/// Addition multiplies probabilities, and `-inf + finite = -inf`. Ordering is
/// the ordering of the underlying reals, so `-inf` compares below every
/// finite value.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Default)]
pub struct LogProb<T>(T);

impl<T: Real> LogProb<T> {
    pub fn impossible() -> Self {
        LogProb(T::neg_infinity())
    }

    pub fn certain() -> Self {
        LogProb(T::zero())
    }

    pub fn from_prob(p: T) -> Self {
        if p <= T::zero() {
            Self::impossible()
        } else {
            LogProb(p.log2())
        }
    }

    /// Wraps a raw bit value. Tiny positive values from rounding are clamped to 0.
    pub fn from_bits(bits: T) -> Self {
        debug_assert!(!bits.is_nan());
        LogProb(if bits > T::zero() { T::zero() } else { bits })
    }

    pub fn bits(self) -> T {
        self.0
    }

    pub fn prob(self) -> T {
        self.0.exp2()
    }

    pub fn is_impossible(self) -> bool {
        self.0 == T::neg_infinity()
    }
}

impl<T: Real> Add for LogProb<T> {
    type Output = LogProb<T>;
    fn add(self, rhs: Self) -> Self {
        LogProb(self.0 + rhs.0)
    }
}

impl<T: Real> fmt::Display for LogProb<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} bits", self.0)
    }
}

/// Anything that supplies one-step predictive distributions over an alphabet.
///
/// `conditional_into` must write a probability vector for every context,
/// including contexts the predictor assigns probability zero; callers that
/// need the conditional to be *defined* use [`Predictive::check_context`].
pub trait Predictive<T: Real> {
    fn alphabet(&self) -> Alphabet;

    fn conditional_into(&self, context: &[Symbol], out: &mut [T]);

    fn check_context(&self, _context: &[Symbol]) -> Result<(), MeasureError> {
        Ok(())
    }
}

impl<T: Real, P: Predictive<T> + ?Sized> Predictive<T> for &P {
    fn alphabet(&self) -> Alphabet {
        (**self).alphabet()
    }
    fn conditional_into(&self, context: &[Symbol], out: &mut [T]) {
        (**self).conditional_into(context, out)
    }
    fn check_context(&self, context: &[Symbol]) -> Result<(), MeasureError> {
        (**self).check_context(context)
    }
}

/// A probability measure on `X^∞`, given by its family and parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Measure<T> {
    alphabet: Alphabet,
    family: Family<T>,
}

#[derive(Clone, Debug, PartialEq)]
enum Family<T> {
    /// Point mass on `prefix · tail^∞`.
    Deterministic {
        prefix: Vec<Symbol>,
        tail: Symbol,
    },
    Iid {
        probs: Vec<T>,
    },
    /// Order-k chain; the first `order` symbols are drawn from `initial`.
    Markov {
        order: usize,
        initial: Vec<T>,
        transitions: Vec<Vec<T>>,
    },
    /// Independent bits with `P(x_t = 1) = θ_t`, oscillating towards `theta0`.
    Oscillating {
        theta0: T,
        amplitude: T,
        clip: T,
    },
    /// First symbol picks the sub-measure that generates the rest.
    Branching {
        first: Vec<T>,
        branches: Vec<Measure<T>>,
    },
}

fn checked_distribution<T: Real>(
    field: &str,
    probs: Vec<T>,
    alphabet: Alphabet,
) -> Result<Vec<T>, MeasureError> {
    if probs.len() != alphabet.size() {
        return Err(invalid(
            field,
            format!(
                "expected {} probabilities, got {}",
                alphabet.size(),
                probs.len()
            ),
        ));
    }
    if let Some(p) = probs
        .iter()
        .find(|p| !(**p >= T::zero() && **p <= T::one()))
    {
        return Err(invalid(field, format!("probability {p} outside [0, 1]")));
    }
    let total: T = crate::scalar::sum_compensated(probs.iter().copied());
    if (total - T::one()).abs() > T::lit(NORMALIZATION_TOLERANCE) {
        return Err(invalid(
            field,
            format!("probabilities sum to {total}, not 1"),
        ));
    }
    Ok(probs)
}

impl<T: Real> Measure<T> {
    pub fn deterministic(
        alphabet: Alphabet,
        prefix: Vec<Symbol>,
        tail: Symbol,
    ) -> Result<Self, MeasureError> {
        alphabet
            .validate(&prefix)
            .map_err(|e| invalid("prefix", e.to_string()))?;
        if !alphabet.contains(tail) {
            return Err(invalid("tail", format!("symbol {tail} outside alphabet")));
        }
        Ok(Measure {
            alphabet,
            family: Family::Deterministic { prefix, tail },
        })
    }

    /// Binary point mass on `1^n 0^∞`.
    pub fn ones_then_zeros(n: usize) -> Self {
        Measure {
            alphabet: Alphabet::BINARY,
            family: Family::Deterministic {
                prefix: vec![1; n],
                tail: 0,
            },
        }
    }

    /// i.i.d. bits with `P(x_t = 1) = theta`.
    pub fn bernoulli(theta: T) -> Result<Self, MeasureError> {
        if !(theta >= T::zero() && theta <= T::one()) {
            return Err(invalid("theta", format!("{theta} outside [0, 1]")));
        }
        Ok(Measure {
            alphabet: Alphabet::BINARY,
            family: Family::Iid {
                probs: vec![T::one() - theta, theta],
            },
        })
    }

    pub fn categorical(probs: Vec<T>) -> Result<Self, MeasureError> {
        let alphabet = Alphabet::new(probs.len()).map_err(|e| invalid("probs", e.to_string()))?;
        let probs = checked_distribution("probs", probs, alphabet)?;
        Ok(Measure {
            alphabet,
            family: Family::Iid { probs },
        })
    }

    /// Order-`order` Markov chain. `transitions[c]` is the next-symbol law for
    /// context `c = Σ_j x_{t-order+j} · |X|^(order-1-j)` (most recent symbol
    /// least significant).
    pub fn markov(
        alphabet: Alphabet,
        order: usize,
        initial: Vec<T>,
        transitions: Vec<Vec<T>>,
    ) -> Result<Self, MeasureError> {
        let contexts = alphabet
            .size()
            .checked_pow(order as u32)
            .ok_or_else(|| invalid("order", "context table too large"))?;
        if transitions.len() != contexts {
            return Err(invalid(
                "transitions",
                format!("expected {contexts} rows, got {}", transitions.len()),
            ));
        }
        let initial = checked_distribution("initial", initial, alphabet)?;
        let transitions = transitions
            .into_iter()
            .enumerate()
            .map(|(i, row)| checked_distribution(&format!("transitions[{i}]"), row, alphabet))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Measure {
            alphabet,
            family: Family::Markov {
                order,
                initial,
                transitions,
            },
        })
    }

    /// Time-dependent Bernoulli with
    /// `θ_t = clamp(theta0 + (-1)^t · amplitude / √t, clip, 1 - clip)`.
    pub fn oscillating_bernoulli(theta0: T, amplitude: T, clip: T) -> Result<Self, MeasureError> {
        if !(clip > T::zero() && clip < T::lit(0.5)) {
            return Err(invalid("clip", format!("{clip} outside (0, 0.5)")));
        }
        if !(theta0 >= clip && theta0 <= T::one() - clip) {
            return Err(invalid(
                "theta0",
                format!("{theta0} outside [clip, 1 - clip]"),
            ));
        }
        if !(amplitude >= T::zero()) {
            return Err(invalid("amplitude", format!("{amplitude} is negative")));
        }
        Ok(Measure {
            alphabet: Alphabet::BINARY,
            family: Family::Oscillating {
                theta0,
                amplitude,
                clip,
            },
        })
    }

    /// Non-ergodic mixture: `x_1 ~ first`, then the rest follows `branches[x_1]`.
    pub fn branching(first: Vec<T>, branches: Vec<Measure<T>>) -> Result<Self, MeasureError> {
        let alphabet = Alphabet::new(first.len()).map_err(|e| invalid("first", e.to_string()))?;
        let first = checked_distribution("first", first, alphabet)?;
        if branches.len() != alphabet.size() {
            return Err(invalid(
                "branches",
                format!(
                    "expected {} branches, got {}",
                    alphabet.size(),
                    branches.len()
                ),
            ));
        }
        if let Some(i) = branches.iter().position(|b| b.alphabet != alphabet) {
            return Err(invalid(format!("branches[{i}]"), "alphabet mismatch"));
        }
        Ok(Measure {
            alphabet,
            family: Family::Branching { first, branches },
        })
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::Deterministic { .. } => "deterministic",
            Family::Iid { .. } => "iid",
            Family::Markov { .. } => "markov",
            Family::Oscillating { .. } => "oscillating",
            Family::Branching { .. } => "branching",
        }
    }

    /// Success probability of the oscillating family at 1-based time `t`.
    fn oscillating_theta(theta0: T, amplitude: T, clip: T, t: usize) -> T {
        let step = amplitude / T::lit(t as f64).sqrt();
        let theta = if t.is_multiple_of(2) {
            theta0 + step
        } else {
            theta0 - step
        };
        theta.max(clip).min(T::one() - clip)
    }

    fn write_conditional(&self, context: &[Symbol], out: &mut [T]) {
        debug_assert_eq!(out.len(), self.alphabet.size());
        match &self.family {
            Family::Deterministic { prefix, tail } => {
                let next = prefix.get(context.len()).copied().unwrap_or(*tail);
                out.iter_mut().for_each(|p| *p = T::zero());
                out[next] = T::one();
            }
            Family::Iid { probs } => out.copy_from_slice(probs),
            Family::Markov {
                order,
                initial,
                transitions,
            } => {
                if context.len() < *order {
                    out.copy_from_slice(initial);
                } else {
                    let base = self.alphabet.size();
                    let idx = context[context.len() - order..]
                        .iter()
                        .fold(0usize, |acc, &s| acc * base + s.min(base - 1));
                    out.copy_from_slice(&transitions[idx]);
                }
            }
            Family::Oscillating {
                theta0,
                amplitude,
                clip,
            } => {
                let theta = Self::oscillating_theta(*theta0, *amplitude, *clip, context.len() + 1);
                out[0] = T::one() - theta;
                out[1] = theta;
            }
            Family::Branching { first, branches } => match context.split_first() {
                None => out.copy_from_slice(first),
                Some((&head, rest)) => {
                    branches[head.min(branches.len() - 1)].write_conditional(rest, out)
                }
            },
        }
    }

    /// `Q(a | x)` for a single symbol, without checking that `x` has positive mass.
    pub fn conditional_prob(&self, context: &[Symbol], symbol: Symbol) -> T {
        if !self.alphabet.contains(symbol) {
            return T::zero();
        }
        match &self.family {
            Family::Deterministic { prefix, tail } => {
                let next = prefix.get(context.len()).copied().unwrap_or(*tail);
                if next == symbol {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Family::Iid { probs } => probs[symbol],
            _ => {
                let mut buf = vec![T::zero(); self.alphabet.size()];
                self.write_conditional(context, &mut buf);
                buf[symbol]
            }
        }
    }

    /// One-step predictive distribution `Q(· | x)`.
    pub fn predictive_distribution(&self, x: &[Symbol]) -> Result<Vec<T>, MeasureError> {
        self.alphabet.validate(x)?;
        if self.log_marginal(x).is_impossible() {
            return Err(MeasureError::UndefinedConditional { len: x.len() });
        }
        let mut out = vec![T::zero(); self.alphabet.size()];
        self.write_conditional(x, &mut out);
        Ok(out)
    }

    /// `log2 Q(x)` by the chain rule. Symbols outside the alphabet have mass zero.
    pub fn log_marginal(&self, x: &[Symbol]) -> LogProb<T> {
        self.log_block(&[], x)
    }

    /// `log2 Q(z | x)` accumulated over the block `z`, without the check on `x`.
    fn log_block(&self, x: &[Symbol], z: &[Symbol]) -> LogProb<T> {
        if let Family::Deterministic { prefix, tail } = &self.family {
            let consistent = z
                .iter()
                .enumerate()
                .all(|(k, &s)| prefix.get(x.len() + k).copied().unwrap_or(*tail) == s);
            return if consistent {
                LogProb::certain()
            } else {
                LogProb::impossible()
            };
        }
        let mut context = Vec::with_capacity(x.len() + z.len());
        context.extend_from_slice(x);
        let mut total = T::zero();
        let mut buf = vec![T::zero(); self.alphabet.size()];
        for &s in z {
            if !self.alphabet.contains(s) {
                return LogProb::impossible();
            }
            self.write_conditional(&context, &mut buf);
            let p = buf[s];
            if p <= T::zero() {
                return LogProb::impossible();
            }
            total = total + p.log2();
            context.push(s);
        }
        LogProb::from_bits(total)
    }

    /// Block conditional `Q(z | x) = Q(xz) / Q(x)`.
    pub fn block_conditional(&self, x: &[Symbol], z: &[Symbol]) -> Result<T, MeasureError> {
        self.alphabet.validate(x)?;
        self.alphabet.validate(z)?;
        if self.log_marginal(x).is_impossible() {
            return Err(MeasureError::UndefinedConditional { len: x.len() });
        }
        Ok(self.log_block(x, z).prob())
    }

    /// Draws `x_{ℓ+1} ~ Q(· | x)`.
    pub fn sample_next<R: Rng + ?Sized>(
        &self,
        x: &[Symbol],
        rng: &mut R,
    ) -> Result<Symbol, MeasureError> {
        let probs = self.predictive_distribution(x)?;
        Ok(sample_index(&probs, rng).expect("normalized distribution has positive mass"))
    }

    /// Draws `x_{ℓ+1} ~ Q(· | x)` assuming `x` has positive mass, which holds
    /// for any `x` sampled from `Q`. `buf` must have one slot per symbol.
    pub fn sample_next_unchecked<R: Rng + ?Sized>(
        &self,
        x: &[Symbol],
        buf: &mut [T],
        rng: &mut R,
    ) -> Symbol {
        self.write_conditional(x, buf);
        sample_index(buf, rng).expect("normalized distribution has positive mass")
    }

    /// Draws `x_{1:len} ~ Q`.
    pub fn sample_sequence<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<Symbol> {
        let mut buf = vec![T::zero(); self.alphabet.size()];
        let mut x = Vec::with_capacity(len);
        for _ in 0..len {
            let s = self.sample_next_unchecked(&x, &mut buf, rng);
            x.push(s);
        }
        x
    }

    /// For point-mass measures, the symbol at 0-based position `t`.
    pub fn point_symbol(&self, t: usize) -> Option<Symbol> {
        match &self.family {
            Family::Deterministic { prefix, tail } => Some(prefix.get(t).copied().unwrap_or(*tail)),
            Family::Iid { probs } => probs.iter().position(|&p| p == T::one()),
            _ => None,
        }
    }

    /// True when the measure is a point mass on a single infinite sequence.
    pub fn is_deterministic(&self) -> bool {
        self.point_symbol(0).is_some()
    }
}

impl<T: Real> Predictive<T> for Measure<T> {
    fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    fn conditional_into(&self, context: &[Symbol], out: &mut [T]) {
        self.write_conditional(context, out)
    }

    fn check_context(&self, context: &[Symbol]) -> Result<(), MeasureError> {
        self.alphabet.validate(context)?;
        if self.log_marginal(context).is_impossible() {
            Err(MeasureError::UndefinedConditional { len: context.len() })
        } else {
            Ok(())
        }
    }
}

/// Serializable description of a measure; the config-file form of [`Measure`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    Deterministic {
        #[serde(default = "binary_size")]
        alphabet: usize,
        prefix: Vec<Symbol>,
        tail: Symbol,
    },
    Bernoulli {
        theta: f64,
    },
    Categorical {
        probs: Vec<f64>,
    },
    Markov {
        #[serde(default = "binary_size")]
        alphabet: usize,
        order: usize,
        transitions: Vec<Vec<f64>>,
        /// Law of the first `order` symbols; uniform when omitted.
        #[serde(default)]
        initial: Option<Vec<f64>>,
    },
    Oscillating {
        theta0: f64,
        amplitude: f64,
        #[serde(default = "default_clip")]
        clip: f64,
    },
    Branching {
        first: Vec<f64>,
        branches: Vec<FamilySpec>,
    },
}

fn binary_size() -> usize {
    2
}

fn default_clip() -> f64 {
    0.01
}

fn lits<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&p| T::lit(p)).collect()
}

impl FamilySpec {
    pub fn build<T: Real>(&self) -> Result<Measure<T>, MeasureError> {
        match self {
            FamilySpec::Deterministic {
                alphabet,
                prefix,
                tail,
            } => Measure::deterministic(
                Alphabet::new(*alphabet).map_err(|e| invalid("alphabet", e.to_string()))?,
                prefix.clone(),
                *tail,
            ),
            FamilySpec::Bernoulli { theta } => Measure::bernoulli(T::lit(*theta)),
            FamilySpec::Categorical { probs } => Measure::categorical(lits(probs)),
            FamilySpec::Markov {
                alphabet,
                order,
                transitions,
                initial,
            } => {
                let alphabet =
                    Alphabet::new(*alphabet).map_err(|e| invalid("alphabet", e.to_string()))?;
                let initial = match initial {
                    Some(p) => lits(p),
                    None => vec![T::one() / T::lit(alphabet.size() as f64); alphabet.size()],
                };
                Measure::markov(
                    alphabet,
                    *order,
                    initial,
                    transitions.iter().map(|row| lits(row)).collect(),
                )
            }
            FamilySpec::Oscillating {
                theta0,
                amplitude,
                clip,
            } => Measure::oscillating_bernoulli(T::lit(*theta0), T::lit(*amplitude), T::lit(*clip)),
            FamilySpec::Branching { first, branches } => {
                let built = branches
                    .iter()
                    .enumerate()
                    .map(|(i, b)| {
                        b.build().map_err(|e| match e {
                            MeasureError::InvalidSpec { field, reason } => {
                                invalid(format!("branches[{i}].{field}"), reason)
                            }
                            other => other,
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Measure::branching(lits(first), built)
            }
        }
    }
}

/// Builds the measure described by `spec`.
pub fn build_family<T: Real>(spec: &FamilySpec) -> Result<Measure<T>, MeasureError> {
    spec.build()
}
