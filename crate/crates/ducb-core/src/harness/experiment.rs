//! Experiment orchestration: seeded replications, trace/aggregate reporting.
//!
//! A run config names an environment, an expert pool, a set of policies and
//! replication parameters. Replications execute in parallel with fully
//! independent per-replication streams (derived from the master seed and the
//! replication index); all disk writes happen from a single writer after the
//! parallel phase, sorted by replication, so outputs are deterministic.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{empirical_divergences, exact_divergence_matrix, DivergenceMatrix};
use crate::env::{EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::experts::Expert;
use crate::harness::progressive_validation_loss;
use crate::policies::{
    batched_run, run_policy, BatchedConfig, EpisodeTrace, EstimatorKind, PolicyConfig, PolicyKind,
    UpdateEvery,
};
use crate::rng::derive_seed;

/// Expert pool file: a list of tagged experts plus, optionally, the context
/// marginal needed for exact divergence computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpertFile {
    pub experts: Vec<Expert>,
    #[serde(default)]
    pub context_probs: Option<Vec<f64>>,
}

impl ExpertFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(Error::from)
    }
}

/// Experiment run configuration (JSON).
///
/// Exactly one of `env` / `env_path` must be present; same for the expert
/// pool unless only the batched policy runs (it builds its own pool).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<EnvSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experts: Option<Vec<Expert>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experts_path: Option<PathBuf>,
    pub policies: Vec<String>,
    /// Estimator used when a policy is named plain "ducb".
    #[serde(default)]
    pub estimator: EstimatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c3: Option<f64>,
    #[serde(default)]
    pub update_every: UpdateEvery,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_first_explore")]
    pub first_explore: u64,
    #[serde(default)]
    pub record_indices: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batched: Option<BatchedConfig>,
}

fn default_reps() -> usize {
    1
}

fn default_epsilon() -> f64 {
    0.06
}

fn default_first_explore() -> u64 {
    100
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(Error::from)
    }

    fn policy_config(&self) -> PolicyConfig {
        let mut cfg = PolicyConfig {
            epsilon: self.epsilon,
            first_explore: self.first_explore,
            update_every: self.update_every,
            record_indices: self.record_indices,
            ..PolicyConfig::default()
        };
        if let Some(c1) = self.c1 {
            cfg.clipped.c1 = c1;
        }
        if let Some(c2) = self.c2 {
            cfg.mom.c2 = c2;
        }
        if let Some(c3) = self.c3 {
            cfg.mom.c3 = c3;
        }
        cfg
    }

    fn batched_config(&self) -> BatchedConfig {
        let mut cfg = self.batched.unwrap_or_default();
        if self.batched.is_none() {
            cfg.estimator = self.estimator;
            cfg.update_every = self.update_every;
            if let Some(c1) = self.c1 {
                cfg.clipped.c1 = c1;
            }
            if let Some(c2) = self.c2 {
                cfg.mom.c2 = c2;
            }
            if let Some(c3) = self.c3 {
                cfg.mom.c3 = c3;
            }
        }
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ResolvedPolicy {
    Fixed(PolicyKind),
    Batched,
}

fn resolve_policy(name: &str, estimator: EstimatorKind) -> Result<ResolvedPolicy> {
    match name {
        "batched" | "batched-ducb" => Ok(ResolvedPolicy::Batched),
        "ducb" => Ok(ResolvedPolicy::Fixed(match estimator {
            EstimatorKind::Clipped => PolicyKind::DucbClipped,
            EstimatorKind::Mom => PolicyKind::DucbMom,
        })),
        other => other.parse::<PolicyKind>().map(ResolvedPolicy::Fixed),
    }
}

/// Aggregate statistics for one policy across replications.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyAggregate {
    pub policy: String,
    pub reps: usize,
    pub checkpoints: Vec<u64>,
    /// Mean/std cumulative regret at checkpoints (synthetic mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_cum_regret: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_cum_regret: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_mean_regret: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_std_regret: Option<f64>,
    /// Mean progressive validation loss at checkpoints (dataset mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_progressive_loss: Option<Vec<f64>>,
    pub mean_wall_time_s: f64,
    pub mean_pull_counts: Vec<f64>,
}

/// Aggregate report serialized to `aggregate.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateReport {
    pub seed: u64,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub reps: usize,
    pub policies: Vec<PolicyAggregate>,
}

/// In-memory result of [`run_experiment`].
pub struct ExperimentOutput {
    pub out_dir: PathBuf,
    pub aggregate: AggregateReport,
    /// Traces per policy, sorted by replication index.
    pub traces: Vec<(String, Vec<EpisodeTrace>)>,
}

/// Checkpoints: powers of two up to the horizon, plus the horizon.
pub fn checkpoints(horizon: u64) -> Vec<u64> {
    let mut points = Vec::new();
    let mut p = 1u64;
    while p < horizon {
        points.push(p);
        p = p.saturating_mul(2);
    }
    points.push(horizon);
    points
}

fn value_at_checkpoint(series: &[f64], t: u64) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    let idx = (t as usize).min(series.len()) - 1;
    series[idx]
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Run every configured policy for `reps` seeded replications.
///
/// Writes per-replication trace CSVs plus JSON summaries, `aggregate.json`,
/// and `plot_data.csv` (round vs mean regret, or mean progressive loss in
/// dataset mode) under the output directory.
pub fn run_experiment(
    config: &ExperimentConfig,
    base_dir: Option<&Path>,
) -> Result<ExperimentOutput> {
    let env_spec = match (&config.env, &config.env_path) {
        (Some(spec), None) => spec.clone(),
        (None, Some(path)) => {
            let resolved = resolve_path(path, base_dir);
            EnvSpec::load(&resolved)?
        }
        _ => {
            return Err(Error::Malformed {
                what: "experiment config",
                detail: "exactly one of env / env_path is required".into(),
            })
        }
    };
    let env_template = env_spec.build(base_dir)?;

    let policies = config
        .policies
        .iter()
        .map(|name| Ok((name.clone(), resolve_policy(name, config.estimator)?)))
        .collect::<Result<Vec<_>>>()?;
    if policies.is_empty() {
        return Err(Error::Malformed {
            what: "experiment config",
            detail: "no policies listed".into(),
        });
    }

    let needs_pool = policies
        .iter()
        .any(|(_, p)| matches!(p, ResolvedPolicy::Fixed(_)));
    let pool: Vec<Expert> = if needs_pool {
        match (&config.experts, &config.experts_path) {
            (Some(experts), None) => experts.clone(),
            (None, Some(path)) => ExpertFile::load(&resolve_path(path, base_dir))?.experts,
            _ => {
                return Err(Error::Malformed {
                    what: "experiment config",
                    detail: "fixed-pool policies need exactly one of experts / experts_path".into(),
                })
            }
        }
    } else {
        Vec::new()
    };

    let needs_divergences = policies.iter().any(|(_, p)| {
        matches!(
            p,
            ResolvedPolicy::Fixed(PolicyKind::DucbClipped | PolicyKind::DucbMom)
        )
    });
    let divergences = if needs_divergences {
        divergences_for(&env_template, &pool)?
    } else {
        DivergenceMatrix::identity(pool.len())
    };

    let policy_config = config.policy_config();
    let batched_config = config.batched_config();
    let horizon = config.horizon;
    let master = config.seed;

    let mut traces: Vec<(String, Vec<EpisodeTrace>)> = Vec::new();
    for (name, resolved) in &policies {
        let mut runs: Vec<(usize, EpisodeTrace)> = (0..config.reps)
            .into_par_iter()
            .map(|rep| {
                let rep_seed = derive_seed(master, rep as u64);
                let mut env = env_template.clone();
                env.reseed(rep_seed);
                let trace = match resolved {
                    ResolvedPolicy::Fixed(kind) => run_policy(
                        &mut env,
                        &pool,
                        &divergences,
                        *kind,
                        &policy_config,
                        horizon,
                        rep_seed,
                    ),
                    ResolvedPolicy::Batched => {
                        batched_run(&mut env, &batched_config, horizon, rep_seed)
                    }
                };
                trace.map(|t| (rep, t))
            })
            .collect::<Result<Vec<_>>>()?;
        runs.sort_by_key(|(rep, _)| *rep);
        traces.push((name.clone(), runs.into_iter().map(|(_, t)| t).collect()));
    }

    let points = checkpoints(horizon);
    let mut aggregates = Vec::new();
    for (name, runs) in &traces {
        let regret_series: Option<Vec<Vec<f64>>> = runs
            .iter()
            .map(|t| t.cumulative_regret())
            .collect::<Option<Vec<_>>>();
        let (mean_cum, std_cum, final_mean, final_std) = match &regret_series {
            Some(series) => {
                let mut means = Vec::with_capacity(points.len());
                let mut stds = Vec::with_capacity(points.len());
                for &t in &points {
                    let vals: Vec<f64> = series.iter().map(|s| value_at_checkpoint(s, t)).collect();
                    let (m, s) = mean_std(&vals);
                    means.push(m);
                    stds.push(s);
                }
                let finals: Vec<f64> = series
                    .iter()
                    .map(|s| s.last().copied().unwrap_or(0.0))
                    .collect();
                let (fm, fs) = mean_std(&finals);
                (Some(means), Some(stds), Some(fm), Some(fs))
            }
            None => (None, None, None, None),
        };
        let mean_loss = if regret_series.is_none() {
            let losses: Vec<Vec<f64>> = runs.iter().map(progressive_validation_loss).collect();
            let mut means = Vec::with_capacity(points.len());
            for &t in &points {
                let vals: Vec<f64> = losses.iter().map(|s| value_at_checkpoint(s, t)).collect();
                means.push(mean_std(&vals).0);
            }
            Some(means)
        } else {
            None
        };
        let n_experts = runs.iter().map(|t| t.pull_counts.len()).max().unwrap_or(0);
        let mut mean_pulls = vec![0.0; n_experts];
        for t in runs {
            for (i, &c) in t.pull_counts.iter().enumerate() {
                mean_pulls[i] += c as f64 / runs.len() as f64;
            }
        }
        aggregates.push(PolicyAggregate {
            policy: name.clone(),
            reps: runs.len(),
            checkpoints: points.clone(),
            mean_cum_regret: mean_cum,
            std_cum_regret: std_cum,
            final_mean_regret: final_mean,
            final_std_regret: final_std,
            mean_progressive_loss: mean_loss,
            mean_wall_time_s: runs.iter().map(|t| t.wall_time_s).sum::<f64>()
                / runs.len().max(1) as f64,
            mean_pull_counts: mean_pulls,
        });
    }

    let aggregate = AggregateReport {
        seed: master,
        horizon,
        reps: config.reps,
        policies: aggregates,
    };

    // Unlike env/expert paths, the output directory resolves against the
    // caller's working directory.
    let out_dir = config
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("ducb-results"));
    write_artifacts(&out_dir, &traces, &aggregate, horizon)?;

    Ok(ExperimentOutput {
        out_dir,
        aggregate,
        traces,
    })
}

fn resolve_path(path: &Path, base_dir: Option<&Path>) -> PathBuf {
    if path.is_relative() {
        base_dir
            .map(|d| d.join(path))
            .unwrap_or_else(|| path.to_path_buf())
    } else {
        path.to_path_buf()
    }
}

fn divergences_for(env: &Environment, pool: &[Expert]) -> Result<DivergenceMatrix> {
    match env {
        Environment::Tabular(e) => exact_divergence_matrix(pool, e.context_probs()),
        Environment::Dataset(_) => {
            // No exact marginal; estimate from the dataset's own contexts.
            let mut probe = env.clone();
            probe.reseed(0);
            let mut contexts = Vec::new();
            while contexts.len() < 10_000 {
                match probe.next_context() {
                    Ok(c) => {
                        let arm = 0;
                        let _ = probe.reward(&c, arm);
                        contexts.push(c);
                    }
                    Err(_) => break,
                }
            }
            empirical_divergences(
                pool,
                &contexts,
                crate::divergence::DEFAULT_DIVERGENCE_GROUPS,
            )
        }
    }
}

fn write_artifacts(
    out_dir: &Path,
    traces: &[(String, Vec<EpisodeTrace>)],
    aggregate: &AggregateReport,
    horizon: u64,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    for (name, runs) in traces {
        for (rep, trace) in runs.iter().enumerate() {
            let stem = format!("trace_{name}_rep{rep:03}");
            let mut csv = std::fs::File::create(out_dir.join(format!("{stem}.csv")))?;
            trace.write_csv(&mut csv)?;
            let summary = serde_json::to_string_pretty(&trace.summary())?;
            std::fs::write(out_dir.join(format!("{stem}.summary.json")), summary)?;
        }
    }
    std::fs::write(
        out_dir.join("aggregate.json"),
        serde_json::to_string_pretty(aggregate)?,
    )?;

    // Plot data: decimated round grid, one mean-metric column per policy.
    let stride = (horizon / 2048).max(1);
    let mut grid: Vec<u64> = (1..=horizon).step_by(stride as usize).collect();
    if *grid.last().unwrap_or(&0) != horizon {
        grid.push(horizon);
    }
    let mut metric_per_policy: Vec<(String, Vec<f64>)> = Vec::new();
    for (name, runs) in traces {
        let series: Vec<Vec<f64>> = runs
            .iter()
            .map(|t| {
                t.cumulative_regret()
                    .unwrap_or_else(|| progressive_validation_loss(t))
            })
            .collect();
        let means: Vec<f64> = grid
            .iter()
            .map(|&t| {
                series
                    .iter()
                    .map(|s| value_at_checkpoint(s, t))
                    .sum::<f64>()
                    / series.len().max(1) as f64
            })
            .collect();
        metric_per_policy.push((name.clone(), means));
    }
    let mut plot = String::from("t");
    for (name, _) in &metric_per_policy {
        plot.push(',');
        plot.push_str(name);
    }
    plot.push('\n');
    for (i, &t) in grid.iter().enumerate() {
        plot.push_str(&t.to_string());
        for (_, means) in &metric_per_policy {
            plot.push(',');
            plot.push_str(&means[i].to_string());
        }
        plot.push('\n');
    }
    std::fs::write(out_dir.join("plot_data.csv"), plot)?;
    Ok(())
}
