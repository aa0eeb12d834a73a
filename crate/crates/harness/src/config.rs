//! Experiment configuration.
//!
//! A config is a TOML document. It describes either a sequence-prediction
//! experiment (`[sequence]`: a model class, a true model and predictors) or
//! an interactive one (`[interactive]`: a class of environments, a policy and
//! value-tracking settings). See the files under `scenarios/` for complete
//! examples.

use std::path::Path;
use std::sync::Arc;

use mdlseq::measures::MeasureError;
use mdlseq::model_class::{Generator, DEFAULT_CUTOFF, DEFAULT_KRAFT_BOUND};
use mdlseq::rl::{BuiltinEnv, BuiltinPolicy, EnvSpec, EnvironmentClass, PolicySpec, RlError};
use mdlseq::{Alphabet, ComplexityRule, DhSettings, FamilySpec, Measure, ModelClass, ModelIndex};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config at {path}: {reason}")]
    Invalid { path: String, reason: String },
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        reason: reason.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Number of trajectories `R`.
    pub trajectories: usize,
    /// Trajectory length `L`; rows are emitted for `ℓ = 0..=L`.
    pub length: usize,
    /// Steps at which the summary reports median distances. Defaults to `L/10, L/2, L`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<usize>>,
    /// When set, MDL-type predictors must end with median `d_h` below this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interactive: Option<InteractiveConfig>,
    #[serde(default)]
    pub predictors: Vec<PredictorConfig>,
    #[serde(default)]
    pub estimator: DhSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    /// 1-based index of the true measure.
    pub truth: usize,
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
    #[serde(default = "default_kraft_bound")]
    pub kraft_bound: f64,
    pub complexity: ComplexityRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<FamilySpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
}

fn default_cutoff() -> usize {
    DEFAULT_CUTOFF
}

fn default_kraft_bound() -> f64 {
    DEFAULT_KRAFT_BOUND
}

/// Lazily generated classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// `Q_i = 1^{i·block} 0^∞` for `i = 1..=count`.
    OnesThenZeros { block: usize, count: usize },
    /// `Q_i` = the `bits`-bit binary expansion of `(i-1)/2^bits`, then zeros,
    /// for `i = 1..2^bits`.
    BinaryExpansion { bits: u32 },
    /// `Q_i = Bern(θ_i)` over the dyadic rationals `1/2, 1/4, 3/4, 1/8, ...`;
    /// infinite unless `count` is given.
    DyadicBernoulli {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        count: Option<usize>,
    },
}

impl GeneratorSpec {
    fn size(&self) -> Option<usize> {
        match self {
            GeneratorSpec::OnesThenZeros { count, .. } => Some(*count),
            GeneratorSpec::BinaryExpansion { bits } => Some((1usize << bits) - 1),
            GeneratorSpec::DyadicBernoulli { count } => *count,
        }
    }

    fn generator(&self) -> Generator<f64> {
        match *self {
            GeneratorSpec::OnesThenZeros { block, .. } => {
                Arc::new(move |i: ModelIndex| Ok(Measure::ones_then_zeros(i.get() * block)))
            }
            GeneratorSpec::BinaryExpansion { bits } => Arc::new(move |i: ModelIndex| {
                let value = i.get() - 1;
                let prefix = (0..bits).map(|b| (value >> (bits - 1 - b)) & 1).collect();
                Measure::deterministic(Alphabet::BINARY, prefix, 0)
            }),
            GeneratorSpec::DyadicBernoulli { .. } => Arc::new(|i: ModelIndex| {
                // Level d holds the odd numerators over 2^d, in increasing order.
                let n = i.get();
                let level = usize::BITS - n.leading_zeros();
                let offset = n - (1 << (level - 1));
                let theta = (2 * offset + 1) as f64 / (1u64 << level) as f64;
                Measure::bernoulli(theta)
            }),
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        match *self {
            GeneratorSpec::OnesThenZeros { block, count } => {
                if block == 0 {
                    return Err(invalid("sequence.generator.block", "must be positive"));
                }
                if count == 0 {
                    return Err(invalid("sequence.generator.count", "must be positive"));
                }
            }
            GeneratorSpec::BinaryExpansion { bits } => {
                if !(1..=20).contains(&bits) {
                    return Err(invalid("sequence.generator.bits", "must lie in 1..=20"));
                }
            }
            GeneratorSpec::DyadicBernoulli { count } => {
                if count == Some(0) {
                    return Err(invalid("sequence.generator.count", "must be positive"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractiveConfig {
    pub truth: usize,
    pub complexity: ComplexityRule,
    pub environments: Vec<EnvSpec>,
    pub policy: PolicySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<ValueConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueConfig {
    pub gamma: f64,
    /// Truncation horizon; when absent, the least `T` with `γ^T/(1-γ) ≤ truncation_tolerance`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default = "default_truncation_tolerance")]
    pub truncation_tolerance: f64,
    pub rollouts: usize,
    /// Values are computed every `every` steps and at the final step.
    pub every: usize,
    /// Gap tolerance for the value-convergence verdict.
    #[serde(default = "default_gap_tolerance")]
    pub gap_tolerance: f64,
    /// Fraction of trajectories that must end within the gap tolerance.
    #[serde(default = "default_gap_fraction")]
    pub gap_fraction: f64,
}

fn default_truncation_tolerance() -> f64 {
    1e-3
}

fn default_gap_tolerance() -> f64 {
    0.05
}

fn default_gap_fraction() -> f64 {
    0.95
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    Mdl,
    Map,
    Bayes,
    Mdli,
    Elimination,
    Majority,
    BayesSample,
    DiscriminativeMdl,
}

impl PredictorKind {
    pub fn name(self) -> &'static str {
        match self {
            PredictorKind::Mdl => "mdl",
            PredictorKind::Map => "map",
            PredictorKind::Bayes => "bayes",
            PredictorKind::Mdli => "mdli",
            PredictorKind::Elimination => "elimination",
            PredictorKind::Majority => "majority",
            PredictorKind::BayesSample => "bayes-sample",
            PredictorKind::DiscriminativeMdl => "discriminative-mdl",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        use PredictorKind::*;
        [
            Mdl,
            Map,
            Bayes,
            Mdli,
            Elimination,
            Majority,
            BayesSample,
            DiscriminativeMdl,
        ]
        .into_iter()
        .find(|k| k.name() == name)
    }

    fn interactive(self) -> bool {
        self == PredictorKind::DiscriminativeMdl
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    pub kind: PredictorKind,
    #[serde(default = "one")]
    pub horizon: usize,
    /// Name used in the records; defaults to the kind, suffixed `-h<h>` when `h > 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

fn one() -> usize {
    1
}

impl PredictorConfig {
    pub fn label(&self) -> String {
        match &self.label {
            Some(l) => l.clone(),
            None if self.horizon > 1 => format!("{}-h{}", self.kind.name(), self.horizon),
            None => self.kind.name().to_string(),
        }
    }
}

/// Built interactive setting.
pub struct InteractiveSetup {
    pub class: EnvironmentClass<f64>,
    pub truth: BuiltinEnv<f64>,
    pub policy: BuiltinPolicy<f64>,
}

pub(crate) fn rl_error(path: &str, e: RlError) -> ConfigError {
    match e {
        RlError::InvalidSpec { field, reason } => invalid(format!("{path}.{field}"), reason),
        other => invalid(path, other.to_string()),
    }
}

fn measure_error(path: String, e: MeasureError) -> ConfigError {
    match e {
        MeasureError::InvalidSpec { field, reason } => invalid(format!("{path}.{field}"), reason),
        other => invalid(path, other.to_string()),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes to JSON");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// First 12 hex digits of [`ExperimentConfig::hash`].
    pub fn run_id(&self) -> String {
        self.hash()[..12].to_string()
    }

    pub fn checkpoints(&self) -> Vec<usize> {
        let mut c = self
            .checkpoints
            .clone()
            .unwrap_or_else(|| default_checkpoints(self.length));
        c.retain(|&s| s <= self.length);
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trajectories == 0 {
            return Err(invalid("trajectories", "must be at least 1"));
        }
        if self.name.is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0) {
                return Err(invalid("epsilon", "must be positive"));
            }
        }
        if self.estimator.mc_samples == 0 {
            return Err(invalid("estimator.mc_samples", "must be positive"));
        }
        let interactive = match (&self.sequence, &self.interactive) {
            (Some(_), None) => false,
            (None, Some(_)) => true,
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "sequence",
                    "give either [sequence] or [interactive], not both",
                ))
            }
            (None, None) => {
                return Err(invalid(
                    "sequence",
                    "missing [sequence] or [interactive] section",
                ))
            }
        };
        let mut labels = std::collections::HashSet::new();
        for (i, p) in self.predictors.iter().enumerate() {
            let path = format!("predictors[{i}]");
            if p.horizon == 0 {
                return Err(invalid(format!("{path}.horizon"), "must be at least 1"));
            }
            if p.kind.interactive() != interactive {
                return Err(invalid(
                    format!("{path}.kind"),
                    format!(
                        "{} needs a [{}] section",
                        p.kind.name(),
                        if p.kind.interactive() {
                            "interactive"
                        } else {
                            "sequence"
                        }
                    ),
                ));
            }
            if !labels.insert(p.label()) {
                return Err(invalid(
                    format!("{path}.label"),
                    format!("duplicate label {}", p.label()),
                ));
            }
        }
        if let Some(seq) = &self.sequence {
            if seq.truth == 0 {
                return Err(invalid("sequence.truth", "indices start at 1"));
            }
            if seq.cutoff == 0 {
                return Err(invalid("sequence.cutoff", "must be positive"));
            }
            match (&seq.models, &seq.generator) {
                (Some(m), None) if m.is_empty() => {
                    return Err(invalid("sequence.models", "class is empty"))
                }
                (Some(_), None) => {}
                (None, Some(g)) => g.validate()?,
                _ => {
                    return Err(invalid(
                        "sequence.models",
                        "give exactly one of `models` and `generator`",
                    ))
                }
            }
            let class = self.build_class()?;
            if seq.truth > class.len() {
                return Err(invalid(
                    "sequence.truth",
                    format!(
                        "index {} beyond the {} enumerated models",
                        seq.truth,
                        class.len()
                    ),
                ));
            }
        }
        if let Some(inter) = &self.interactive {
            if let Some(v) = &inter.values {
                if !(v.gamma > 0.0 && v.gamma < 1.0) {
                    return Err(invalid("interactive.values.gamma", "must lie in (0, 1)"));
                }
                if v.rollouts == 0 {
                    return Err(invalid("interactive.values.rollouts", "must be positive"));
                }
                if v.every == 0 {
                    return Err(invalid("interactive.values.every", "must be positive"));
                }
                if !(v.truncation_tolerance > 0.0) {
                    return Err(invalid(
                        "interactive.values.truncation_tolerance",
                        "must be positive",
                    ));
                }
            }
            self.build_interactive()?;
        }
        Ok(())
    }

    /// The sequence model class with its truth set.
    pub fn build_class(&self) -> Result<ModelClass<f64>, ConfigError> {
        let seq = self
            .sequence
            .as_ref()
            .ok_or_else(|| invalid("sequence", "missing [sequence] section"))?;
        let class = match (&seq.models, &seq.generator) {
            (Some(models), _) => {
                let built = models
                    .iter()
                    .enumerate()
                    .map(|(i, m)| {
                        m.build()
                            .map_err(|e| measure_error(format!("sequence.models[{i}]"), e))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                ModelClass::from_measures(built, seq.complexity.clone())
            }
            (None, Some(g)) => ModelClass::from_generator(
                Alphabet::BINARY,
                g.generator(),
                g.size(),
                seq.complexity.clone(),
                seq.cutoff,
            ),
            (None, None) => return Err(invalid("sequence.models", "class is empty")),
        }
        .map_err(|e| invalid("sequence", e.to_string()))?;
        let class = class
            .with_kraft_bound(seq.kraft_bound)
            .map_err(|e| invalid("sequence.kraft_bound", e.to_string()))?;
        class
            .with_truth(seq.truth)
            .map_err(|e| invalid("sequence.truth", e.to_string()))
    }

    pub fn build_interactive(&self) -> Result<InteractiveSetup, ConfigError> {
        let inter = self
            .interactive
            .as_ref()
            .ok_or_else(|| invalid("interactive", "missing [interactive] section"))?;
        let envs = inter
            .environments
            .iter()
            .enumerate()
            .map(|(i, e)| {
                BuiltinEnv::from_spec(e)
                    .map_err(|err| rl_error(&format!("interactive.environments[{i}]"), err))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let truth = envs
            .get(inter.truth.wrapping_sub(1))
            .cloned()
            .ok_or_else(|| {
                invalid(
                    "interactive.truth",
                    format!("no environment {}", inter.truth),
                )
            })?;
        let class = EnvironmentClass::new(envs, inter.complexity.clone())
            .and_then(|c| c.with_truth(inter.truth))
            .map_err(|e| rl_error("interactive", e))?;
        let policy = BuiltinPolicy::from_spec(&inter.policy)
            .map_err(|e| rl_error("interactive.policy", e))?;
        if mdlseq::Policy::<f64>::num_actions(&policy) != class.num_actions() {
            return Err(invalid(
                "interactive.policy",
                format!(
                    "policy has {} actions, environments have {}",
                    mdlseq::Policy::<f64>::num_actions(&policy),
                    class.num_actions()
                ),
            ));
        }
        Ok(InteractiveSetup {
            class,
            truth,
            policy,
        })
    }
}

/// `L/10, L/2, L`, without duplicates.
pub fn default_checkpoints(length: usize) -> Vec<usize> {
    let mut c = vec![length / 10, length / 2, length];
    c.dedup();
    c
}
