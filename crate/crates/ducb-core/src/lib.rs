//! Divergence-based UCB for contextual bandits with stochastic experts.
//!
//! Each expert is a conditional distribution over arms given a context.
//! Samples collected under any expert estimate every expert's mean through
//! importance reweighting; how much a sample from expert j tells us about
//! expert k is governed by pairwise f-divergences. This crate provides:
//!
//! * [`env`](mod@env) — tabular and dataset-backed bandit environments;
//! * [`experts`] — tabular and softmax experts plus arm sampling;
//! * [`oracle`] — importance-weighted cost-sensitive oracle training;
//! * [`divergence`] — exact and empirical log-/chi-square divergence matrices;
//! * [`estimators`] — the clipped and median-of-means importance-sampling
//!   estimators with their confidence radii;
//! * [`policies`] — the divergence-based UCB round loop, its batched variant
//!   with a growing expert pool, and baseline policies;
//! * [`harness`] — instance-dependent bound evaluators, the uniform-gap
//!   generative model, and the replication/reporting harness.

pub mod divergence;
pub mod env;
pub mod error;
pub mod estimators;
pub mod experts;
pub mod harness;
pub mod oracle;
pub mod policies;
pub mod rng;
mod stats;

pub use divergence::{empirical_divergences, exact_divergence_matrix, DivergenceMatrix};
pub use env::{DatasetEnvironment, EnvSpec, Environment, RoundOutcome, TabularEnvironment};
pub use error::{Error, Result};
pub use estimators::{ClippedConfig, ExpertIndex, MoMConfig, SampleLog, SampleRecord};
pub use experts::{ContextValue, Expert, SoftmaxExpert, TabularExpert};
pub use harness::experiment::{run_experiment, AggregateReport, ExperimentConfig, ExpertFile};
pub use harness::{BoundKind, BoundReport, GapProfile, SyntheticInstance};
pub use oracle::{OracleHyperparams, TrainedOracle, TrainingExample};
pub use policies::{
    batched_run, run_policy, BatchedConfig, EpisodeTrace, EstimatorKind, PolicyConfig, PolicyKind,
    RoundRecord, UpdateEvery,
};
