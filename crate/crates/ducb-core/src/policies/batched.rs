//! Batched variant with online oracle training.
//!
//! The run starts with a single uniform expert for `3K` rounds, then
//! alternates between batch boundaries (spawn bootstrapped oracles from the
//! importance-weighted log, re-estimate divergences from all contexts
//! observed so far) and UCB deployment phases of roughly `sqrt(t)` rounds.
//! Divergences never change mid-batch. Regret has no ground truth once the
//! pool grows, so batched traces report rewards only; progressive validation
//! loss is the evaluation metric.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::divergence::EmpiricalDivergenceAccumulator;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::estimators::{ClippedConfig, ExpertIndex, MoMConfig, SampleLog, SampleRecord};
use crate::experts::{ContextValue, Expert};
use crate::oracle::{spawn_batch_experts, OracleHyperparams};
use crate::policies::{
    EpisodeTrace, EstimatorKind, IndexEngine, RoundRecord, SqrtSchedule, UpdateEvery,
};
use crate::rng::{derive_rng, derive_seed, STREAM_POLICY};
use crate::stats::argmax;

/// Settings for [`batched_run`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchedConfig {
    pub estimator: EstimatorKind,
    pub clipped: ClippedConfig,
    pub mom: MoMConfig,
    pub update_every: UpdateEvery,
    pub oracle: OracleHyperparams,
    /// Experts spawned at each batch boundary.
    pub experts_per_batch: usize,
    /// Hard cap on pool size; divergence updates are O(N^2).
    pub pool_cap: usize,
    /// Batch length is `ceil(sqrt(t) * batch_multiplier)`.
    pub batch_multiplier: f64,
    /// Median-of-means groups for empirical divergence estimation.
    pub divergence_groups: usize,
    pub record_indices: bool,
}

impl Default for BatchedConfig {
    fn default() -> Self {
        BatchedConfig {
            estimator: EstimatorKind::Mom,
            clipped: ClippedConfig::practice(),
            mom: MoMConfig::practice(),
            update_every: UpdateEvery::Schedule(SqrtSchedule::Sqrt),
            oracle: OracleHyperparams::default(),
            experts_per_batch: 4,
            pool_cap: 64,
            batch_multiplier: 1.0,
            divergence_groups: 5,
            record_indices: false,
        }
    }
}

impl BatchedConfig {
    pub fn validate(&self) -> Result<()> {
        self.clipped.validate()?;
        self.mom.validate()?;
        if self.experts_per_batch == 0 {
            return Err(Error::InvalidParameter {
                name: "experts_per_batch",
                value: 0.0,
            });
        }
        if self.pool_cap < 2 {
            return Err(Error::InvalidParameter {
                name: "pool_cap",
                value: self.pool_cap as f64,
            });
        }
        if !self.batch_multiplier.is_finite() || self.batch_multiplier <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "batch_multiplier",
                value: self.batch_multiplier,
            });
        }
        if self.divergence_groups == 0 {
            return Err(Error::InvalidParameter {
                name: "divergence_groups",
                value: 0.0,
            });
        }
        Ok(())
    }

    pub fn policy_name(&self) -> String {
        format!("batched-ducb-{}", self.estimator)
    }
}

/// Run Batched D-UCB for `horizon` rounds (`horizon > 3K` required).
pub fn batched_run(
    env: &mut Environment,
    cfg: &BatchedConfig,
    horizon: u64,
    seed: u64,
) -> Result<EpisodeTrace> {
    cfg.validate()?;
    let start = Instant::now();
    let num_arms = env.num_arms();
    let warmup = 3 * num_arms as u64;
    if horizon <= warmup {
        return Err(Error::InvalidParameter {
            name: "horizon (must exceed the 3K warm start)",
            value: horizon as f64,
        });
    }

    let mut pool = vec![Expert::uniform_softmax(num_arms)];
    let mut log = SampleLog::new(num_arms);
    let mut rng = derive_rng(seed, STREAM_POLICY);
    let mut engine = IndexEngine::new(
        pool.len(),
        cfg.estimator,
        cfg.clipped,
        cfg.mom,
        cfg.update_every,
    );
    let mut acc = EmpiricalDivergenceAccumulator::new(cfg.divergence_groups);
    acc.add_experts(&pool, &[])?;
    let mut contexts_known = 0usize;

    let mut records: Vec<RoundRecord> = Vec::with_capacity(horizon as usize);
    let mut warnings: Vec<String> = Vec::new();
    let mut pull_counts = vec![0u64; 1];
    let mut exhausted = false;
    let mut cap_warned = false;

    let play = |t: u64,
                chosen: usize,
                indices: Vec<f64>,
                env: &mut Environment,
                rng: &mut rand_chacha::ChaCha8Rng,
                pool: &[Expert],
                log: &mut SampleLog,
                pull_counts: &mut Vec<u64>|
     -> Result<Option<RoundRecord>> {
        let context = match env.next_context() {
            Ok(c) => c,
            Err(Error::DatasetExhausted { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let (arm, behavior_prob) = pool[chosen].sample_arm(&context, rng)?;
        let reward = env.reward(&context, arm)?;
        log.push(SampleRecord {
            round: t,
            expert: chosen,
            context,
            arm,
            reward,
            behavior_prob,
        })?;
        pull_counts[chosen] += 1;
        Ok(Some(RoundRecord {
            t,
            expert: chosen,
            arm,
            reward,
            regret: None,
            indices,
        }))
    };

    // Warm start: the uniform expert only.
    let mut t = 1u64;
    while t <= warmup {
        match play(
            t,
            0,
            Vec::new(),
            env,
            &mut rng,
            &pool,
            &mut log,
            &mut pull_counts,
        )? {
            Some(rec) => records.push(rec),
            None => {
                exhausted = true;
                break;
            }
        }
        t += 1;
    }

    let mut batch_index = 0u64;
    while !exhausted && t <= horizon {
        // Batch boundary: spawn experts on observed data, update divergences.
        if pool.len() < cfg.pool_cap {
            let want = cfg.experts_per_batch.min(cfg.pool_cap - pool.len());
            let spawned = spawn_batch_experts(&log, want, derive_seed(seed, 0x42 + batch_index))?;
            for trained in spawned {
                if trained.degenerate {
                    warnings.push(format!(
                        "batch {batch_index}: oracle training degenerate, uniform expert added"
                    ));
                }
                pool.push(Expert::Softmax(trained.expert));
                pull_counts.push(0);
            }
        } else if !cap_warned {
            warnings.push(format!(
                "expert pool reached cap {} at t={t}; no further experts added",
                cfg.pool_cap
            ));
            cap_warned = true;
        }

        let contexts: Vec<ContextValue> = log.contexts().cloned().collect();
        acc.add_experts(&pool, &contexts[..contexts_known])?;
        acc.add_contexts(&pool, &contexts[contexts_known..])?;
        contexts_known = contexts.len();
        let divergences = acc.matrix()?;

        engine.grow_pool(pool.len());
        engine.mark_dirty();

        let batch_len = ((t as f64).sqrt() * cfg.batch_multiplier).ceil().max(1.0) as u64;
        let batch_end = (t + batch_len - 1).min(horizon);
        while t <= batch_end {
            engine.maybe_refresh(t, &pool, &log, &divergences)?;
            let ucbs: Vec<f64> = engine.indices().iter().map(ExpertIndex::ucb).collect();
            let chosen = argmax(&ucbs);
            let indices = if cfg.record_indices { ucbs } else { Vec::new() };
            match play(
                t,
                chosen,
                indices,
                env,
                &mut rng,
                &pool,
                &mut log,
                &mut pull_counts,
            )? {
                Some(rec) => records.push(rec),
                None => {
                    exhausted = true;
                    break;
                }
            }
            t += 1;
        }
        batch_index += 1;
    }

    if exhausted {
        warnings.push(format!(
            "dataset exhausted at round {}; trace truncated",
            records.len()
        ));
    }

    Ok(EpisodeTrace {
        policy: cfg.policy_name(),
        seed,
        records,
        pull_counts,
        final_cum_regret: None,
        wall_time_s: start.elapsed().as_secs_f64(),
        warnings,
    })
}
