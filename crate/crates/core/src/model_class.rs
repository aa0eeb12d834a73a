//! Countable model classes with codelengths.
//!
//! A [`ModelClass`] is an ordered family `Q_1, Q_2, ...` of measures together
//! with codelengths `K(Q_i)` in bits. Classes are either an explicit list or a
//! generator that is enumerated lazily up to a hard cutoff `N`; generated
//! members are memoized on first access.
//!
//! The tail weight `δ(m) = Σ_{i>m} 2^{-K(Q_i)}` controls how likely MDL is to
//! ever select a model beyond index `m`, and [`ModelClass::effective_size`]
//! reports the least `m` for which `δ(m)·2^{K(P)} ≤ ε`.

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{Alphabet, Measure, MeasureError};
use crate::scalar::{sum_compensated, Real};

/// Default enumeration cutoff.
pub const DEFAULT_CUTOFF: usize = 10_000;

/// Default bound on `Σ 2^{-K}`: room for the two-log rule, whose mass is π²/6.
pub const DEFAULT_KRAFT_BOUND: f64 = 1.645 * 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassError {
    #[error("model class is empty")]
    Empty,
    #[error("model {index}: {source}")]
    Model { index: usize, source: MeasureError },
    #[error("model {index} has alphabet size {found}, class uses {expected}")]
    AlphabetMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("codelength of model {index} is {value}; codelengths must be finite and non-negative")]
    InvalidCodelength { index: usize, value: f64 },
    #[error("complexity rule {rule} cannot describe this class: {reason}")]
    RuleMismatch { rule: &'static str, reason: String },
    #[error("Kraft mass {mass} over the first {upto} models exceeds the bound {bound}")]
    KraftViolation { mass: f64, upto: usize, bound: f64 },
    #[error("index {index} outside the enumerated class of {len} models")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("no true model designated")]
    NoTruth,
    #[error("tolerance {0} must lie in (0, 1)")]
    InvalidTolerance(f64),
    #[error("tail weight still above tolerance at the enumeration cutoff {cutoff}")]
    CutoffExhausted { cutoff: usize },
}

/// 1-based position of a model in its class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModelIndex(usize);

impl ModelIndex {
    pub fn new(index: usize) -> Option<Self> {
        (index >= 1).then_some(ModelIndex(index))
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// 0-based storage slot.
    pub fn slot(self) -> usize {
        self.0 - 1
    }

    pub fn from_slot(slot: usize) -> Self {
        ModelIndex(slot + 1)
    }
}

impl fmt::Display for ModelIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}", self.0)
    }
}

/// How codelengths `K(Q_i)` are assigned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ComplexityRule {
    /// `K(Q_i) = 2 log2 i`.
    TwoLog,
    Explicit {
        codelengths: Vec<f64>,
    },
    /// `K = log2 |M|` for a finite class.
    Uniform,
}

impl ComplexityRule {
    fn name(&self) -> &'static str {
        match self {
            ComplexityRule::TwoLog => "two-log",
            ComplexityRule::Explicit { .. } => "explicit",
            ComplexityRule::Uniform => "uniform",
        }
    }
}

/// Builds the `i`-th (1-based) member of a generated class.
pub type Generator<T> = Arc<dyn Fn(ModelIndex) -> Result<Measure<T>, MeasureError> + Send + Sync>;

enum Source<T> {
    Explicit(Vec<Measure<T>>),
    Generated {
        generator: Generator<T>,
        cache: Vec<OnceLock<Measure<T>>>,
    },
}

/// `δ(m)` together with whether it was cut off at the enumeration limit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailWeight<T> {
    pub value: T,
    pub truncated: bool,
}

/// Ordered countable class of measures with codelengths.
pub struct ModelClass<T> {
    source: Source<T>,
    alphabet: Alphabet,
    rule: ComplexityRule,
    /// Number of members, `None` for a countably infinite class.
    size: Option<usize>,
    cutoff: usize,
    truth: Option<ModelIndex>,
    kraft_bound: f64,
    codelengths: Vec<T>,
}

impl<T: Real> fmt::Debug for ModelClass<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelClass")
            .field("len", &self.len())
            .field("size", &self.size)
            .field("rule", &self.rule)
            .field("truth", &self.truth)
            .finish()
    }
}

/// Σ_{i>m} 1/i², accurate to ~1e-15 via Euler–Maclaurin past index 64.
pub fn inverse_square_tail(m: usize) -> f64 {
    const SWITCH: usize = 64;
    let start = m + 1;
    let direct: f64 = if start < SWITCH {
        sum_compensated((start..SWITCH).rev().map(|i| 1.0 / (i as f64 * i as f64)))
    } else {
        0.0
    };
    let n = start.max(SWITCH) as f64;
    let asymptotic = 1.0 / n + 1.0 / (2.0 * n * n) + 1.0 / (6.0 * n.powi(3))
        - 1.0 / (30.0 * n.powi(5))
        + 1.0 / (42.0 * n.powi(7))
        - 1.0 / (30.0 * n.powi(9));
    direct + asymptotic
}

impl<T: Real> ModelClass<T> {
    /// Finite class from an explicit list.
    pub fn from_measures(
        models: Vec<Measure<T>>,
        rule: ComplexityRule,
    ) -> Result<Self, ClassError> {
        let first = models.first().ok_or(ClassError::Empty)?;
        let alphabet = first.alphabet();
        if let Some((i, m)) = models
            .iter()
            .enumerate()
            .find(|(_, m)| m.alphabet() != alphabet)
        {
            return Err(ClassError::AlphabetMismatch {
                index: i + 1,
                expected: alphabet.size(),
                found: m.alphabet().size(),
            });
        }
        let size = models.len();
        Self::assemble(Source::Explicit(models), alphabet, rule, Some(size), size)
    }

    /// Lazily generated class with `size` members (`None` = infinite),
    /// enumerated up to `cutoff`.
    pub fn from_generator(
        alphabet: Alphabet,
        generator: Generator<T>,
        size: Option<usize>,
        rule: ComplexityRule,
        cutoff: usize,
    ) -> Result<Self, ClassError> {
        let len = size.map_or(cutoff, |s| s.min(cutoff));
        if len == 0 {
            return Err(ClassError::Empty);
        }
        let cache = (0..len).map(|_| OnceLock::new()).collect();
        Self::assemble(
            Source::Generated { generator, cache },
            alphabet,
            rule,
            size,
            cutoff,
        )
    }

    fn assemble(
        source: Source<T>,
        alphabet: Alphabet,
        rule: ComplexityRule,
        size: Option<usize>,
        cutoff: usize,
    ) -> Result<Self, ClassError> {
        let len = size.map_or(cutoff, |s| s.min(cutoff));
        let codelengths = Self::codelength_table(&rule, size, len)?;
        let class = ModelClass {
            source,
            alphabet,
            rule,
            size,
            cutoff,
            truth: None,
            kraft_bound: DEFAULT_KRAFT_BOUND,
            codelengths,
        };
        class.check_kraft()?;
        Ok(class)
    }

    pub(crate) fn codelength_table(
        rule: &ComplexityRule,
        size: Option<usize>,
        len: usize,
    ) -> Result<Vec<T>, ClassError> {
        let table: Vec<f64> = match rule {
            ComplexityRule::TwoLog => (1..=len).map(|i| 2.0 * (i as f64).log2()).collect(),
            ComplexityRule::Explicit { codelengths } => {
                let needed = size.ok_or_else(|| ClassError::RuleMismatch {
                    rule: rule.name(),
                    reason: "an explicit list cannot cover an infinite class".into(),
                })?;
                if codelengths.len() != needed {
                    return Err(ClassError::RuleMismatch {
                        rule: rule.name(),
                        reason: format!(
                            "{} codelengths for a class of {needed} models",
                            codelengths.len()
                        ),
                    });
                }
                codelengths[..len].to_vec()
            }
            ComplexityRule::Uniform => {
                let n = size.ok_or_else(|| ClassError::RuleMismatch {
                    rule: rule.name(),
                    reason: "uniform codelengths need a finite class".into(),
                })?;
                vec![(n as f64).log2(); len]
            }
        };
        if let Some((i, &v)) = table
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(ClassError::InvalidCodelength {
                index: i + 1,
                value: v,
            });
        }
        Ok(table.into_iter().map(T::lit).collect())
    }

    fn check_kraft(&self) -> Result<(), ClassError> {
        let mass = self.kraft_mass(self.len()).as_f64();
        if mass > self.kraft_bound * (1.0 + 1e-12) {
            return Err(ClassError::KraftViolation {
                mass,
                upto: self.len(),
                bound: self.kraft_bound,
            });
        }
        Ok(())
    }

    /// Designates the true measure `P`.
    pub fn with_truth(mut self, truth: usize) -> Result<Self, ClassError> {
        let idx = ModelIndex::new(truth)
            .filter(|i| i.get() <= self.len())
            .ok_or(ClassError::IndexOutOfRange {
                index: truth,
                len: self.len(),
            })?;
        self.truth = Some(idx);
        Ok(self)
    }

    pub fn with_kraft_bound(mut self, bound: f64) -> Result<Self, ClassError> {
        self.kraft_bound = bound;
        self.check_kraft()?;
        Ok(self)
    }

    /// Number of enumerated models, `min(size, cutoff)`.
    pub fn len(&self) -> usize {
        self.codelengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codelengths.is_empty()
    }

    pub fn size(&self) -> Option<usize> {
        self.size
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn rule(&self) -> &ComplexityRule {
        &self.rule
    }

    pub fn truth(&self) -> Option<ModelIndex> {
        self.truth
    }

    pub fn kraft_bound(&self) -> f64 {
        self.kraft_bound
    }

    pub fn indices(&self) -> impl Iterator<Item = ModelIndex> {
        (0..self.len()).map(ModelIndex::from_slot)
    }

    /// `K(Q_i)` in bits.
    pub fn codelength(&self, index: ModelIndex) -> T {
        self.codelengths[index.slot()]
    }

    pub fn codelengths(&self) -> &[T] {
        &self.codelengths
    }

    /// Member `index`, constructing and memoizing it for generated classes.
    pub fn model(&self, index: ModelIndex) -> Result<&Measure<T>, ClassError> {
        if index.get() > self.len() {
            return Err(ClassError::IndexOutOfRange {
                index: index.get(),
                len: self.len(),
            });
        }
        match &self.source {
            Source::Explicit(models) => Ok(&models[index.slot()]),
            Source::Generated { generator, cache } => {
                let cell = &cache[index.slot()];
                if let Some(m) = cell.get() {
                    return Ok(m);
                }
                let built = generator(index).map_err(|source| ClassError::Model {
                    index: index.get(),
                    source,
                })?;
                if built.alphabet() != self.alphabet {
                    return Err(ClassError::AlphabetMismatch {
                        index: index.get(),
                        expected: self.alphabet.size(),
                        found: built.alphabet().size(),
                    });
                }
                // Concurrent builders produce equal values; the first one wins.
                let _ = cell.set(built);
                Ok(cell.get().expect("cell initialized above"))
            }
        }
    }

    /// All enumerated members, in order.
    pub fn materialize(&self) -> Result<Vec<&Measure<T>>, ClassError> {
        self.indices().map(|i| self.model(i)).collect()
    }

    /// `Σ_{i ≤ upto} 2^{-K(Q_i)}`; `upto` is clamped to the enumerated length.
    pub fn kraft_mass(&self, upto: usize) -> T {
        let upto = upto.min(self.len());
        sum_compensated(self.codelengths[..upto].iter().map(|&k| (-k).exp2()))
    }

    /// Total Kraft mass of the whole class, when it is known in closed form.
    pub fn total_kraft_mass(&self) -> Option<T> {
        match (self.size, &self.rule) {
            (None, ComplexityRule::TwoLog) => Some(T::lit(std::f64::consts::PI.powi(2) / 6.0)),
            (Some(n), _) if n <= self.len() => Some(self.kraft_mass(n)),
            (Some(n), ComplexityRule::TwoLog) => Some(T::lit(
                std::f64::consts::PI.powi(2) / 6.0 - inverse_square_tail(n),
            )),
            (Some(_), ComplexityRule::Uniform) => Some(T::one()),
            _ => None,
        }
    }

    /// `δ(m) = Σ_{i>m} 2^{-K(Q_i)}`.
    ///
    /// Exact for finite classes and for the two-log rule (where the tail is
    /// `Σ_{i>m} i^{-2}`); otherwise summed up to the cutoff and flagged.
    pub fn tail_weight(&self, m: usize) -> TailWeight<T> {
        match (self.size, &self.rule) {
            (None, ComplexityRule::TwoLog) => TailWeight {
                value: T::lit(inverse_square_tail(m)),
                truncated: false,
            },
            (Some(n), ComplexityRule::TwoLog) if n > self.len() => TailWeight {
                value: T::lit(inverse_square_tail(m) - inverse_square_tail(n)),
                truncated: false,
            },
            (Some(n), ComplexityRule::Uniform) if n > self.len() => TailWeight {
                value: T::lit(n.saturating_sub(m) as f64 / n as f64),
                truncated: false,
            },
            _ => {
                let m = m.min(self.len());
                TailWeight {
                    value: sum_compensated(self.codelengths[m..].iter().map(|&k| (-k).exp2())),
                    truncated: self.size.is_none_or(|n| n > self.len()),
                }
            }
        }
    }

    /// Least `m ≥ index(P)` with `δ(m)·2^{K(P)} ≤ eps`.
    pub fn effective_size(&self, eps: f64) -> Result<usize, ClassError> {
        let truth = self.truth.ok_or(ClassError::NoTruth)?;
        if !(eps > 0.0 && eps < 1.0) {
            return Err(ClassError::InvalidTolerance(eps));
        }
        let scale = self.codelength(truth).as_f64().exp2();
        let ok = |m: usize| self.tail_weight(m).value.as_f64() * scale <= eps;
        let (mut lo, mut hi) = (truth.get(), self.cutoff);
        if !ok(hi) {
            return Err(ClassError::CutoffExhausted {
                cutoff: self.cutoff,
            });
        }
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Ok(lo)
    }
}
