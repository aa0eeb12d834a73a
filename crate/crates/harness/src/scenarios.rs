//! Built-in scenarios, shipped as TOML under `scenarios/`.

use crate::config::{ConfigError, ExperimentConfig};

pub struct Scenario {
    pub name: &'static str,
    pub summary: &'static str,
    pub toml: &'static str,
}

macro_rules! scenario {
    ($name:literal, $summary:literal) => {
        Scenario {
            name: $name,
            summary: $summary,
            toml: include_str!(concat!("../scenarios/", $name, ".toml")),
        }
    };
}

pub const SCENARIOS: &[Scenario] = &[
    scenario!(
        "det-elimination",
        "elimination learning on Q_i = 1^{3i}0^∞, truth Q_4"
    ),
    scenario!(
        "det-majority",
        "weighted majority on 6-bit binary expansions, truth Q_63"
    ),
    scenario!(
        "bernoulli-pair",
        "Bern(1/2) against Bern(3/4), uniform prior"
    ),
    scenario!(
        "markov-class",
        "nine order-1 binary chains, two-log codelengths"
    ),
    scenario!("trouble-osc", "oscillating Bernoulli against Bern(1/2)"),
    scenario!(
        "branching-nonergodic",
        "first symbol picks the law of the rest"
    ),
    scenario!("rl-two-env", "two bandits under a fixed policy, value gaps"),
    scenario!(
        "discriminative-regression",
        "identify f: {0..3} → {0,1} by probing"
    ),
];

pub fn find(name: &str) -> Option<&'static Scenario> {
    SCENARIOS.iter().find(|s| s.name == name)
}

impl Scenario {
    pub fn config(&self) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_toml(self.toml)
    }
}
