//! Sequence prediction over countable model classes.
//!
//! The crate provides probability measures on infinite sequences over a
//! finite alphabet ([`measures`]), countable classes of such measures with
//! codelengths ([`model_class`]), the MDL, MAP, Bayes-mixture, MDLI,
//! elimination and weighted-majority predictors ([`predictors`]), distances
//! between predictive distributions ([`metrics`]) and an interactive
//! agent/environment setting ([`rl`]).
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the `*64` aliases
//! below fix the scalar to `f64`, which is what the experiment harness uses.

pub mod measures;
pub mod metrics;
pub mod model_class;
pub mod predictors;
pub mod rl;
pub mod rng;
pub mod scalar;
pub mod stats;

pub use measures::{Alphabet, FamilySpec, LogProb, Measure, MeasureError, Predictive, Symbol};
pub use metrics::{
    dh_auto, dh_exact, dh_monte_carlo, DhSettings, Estimator, LogRatioTrace, StepDistance,
};
pub use model_class::{ClassError, ComplexityRule, ModelClass, ModelIndex, TailWeight};
pub use predictors::{
    bayes_posterior, bayes_predict, map_select, mdl_predict, mdl_select, AliveSet, ClassTracker,
    MdlSelection, MdliState, PredictError, WeightedAliveSet,
};
pub use rl::{
    BuiltinEnv, BuiltinPolicy, EnvSpec, Environment, EnvironmentClass, InteractionHistory, Policy,
    PolicySpec, RlError, ValueEstimate,
};
pub use rng::{substream, RandomStream};
pub use scalar::Real;

pub type Measure64 = Measure<f64>;
pub type Measure32 = Measure<f32>;
pub type ModelClass64 = ModelClass<f64>;
pub type ModelClass32 = ModelClass<f32>;
pub type EnvironmentClass64 = EnvironmentClass<f64>;
