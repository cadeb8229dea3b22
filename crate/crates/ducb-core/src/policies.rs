//! Policy round loops: divergence-based UCB and baselines.
//!
//! The divergence-based policy picks the expert with the highest index
//! `U_k(t-1) = estimate + radius` computed by either estimator over the
//! shared sample log, sampling an arm from the chosen expert's conditional
//! distribution each round. Round one picks a uniformly random expert.
//! Baselines (UCB-1 over experts, epsilon-greedy, explore-then-commit)
//! observe rewards only from their own pulls; the contrast with the shared
//! log is the point of the comparison.
//!
//! Index recomputation is O(N t); `update_every` can spread refreshes out
//! (the square-root schedule keeps long runs near-linear overall).

pub mod batched;

pub use batched::{batched_run, BatchedConfig};

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::divergence::DivergenceMatrix;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::estimators::{
    clipped_index_with, mom_index_with, ClippedConfig, ExpertIndex, MoMConfig, SampleLog,
    SampleRecord,
};
use crate::experts::{ContextValue, Expert};
use crate::rng::{derive_rng, STREAM_POLICY};
use crate::stats::argmax;

/// Which importance-sampling estimator feeds the UCB indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Clipped,
    #[default]
    Mom,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorKind::Clipped => write!(f, "clipped"),
            EstimatorKind::Mom => write!(f, "mom"),
        }
    }
}

/// Index refresh schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UpdateEvery {
    /// Recompute indices every `n` rounds (`1` = every round).
    Rounds(u64),
    /// Recompute roughly every sqrt(t) rounds.
    Schedule(SqrtSchedule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SqrtSchedule {
    Sqrt,
}

impl Default for UpdateEvery {
    fn default() -> Self {
        UpdateEvery::Rounds(1)
    }
}

impl UpdateEvery {
    fn spacing(&self, round: u64) -> u64 {
        match self {
            UpdateEvery::Rounds(n) => (*n).max(1),
            UpdateEvery::Schedule(SqrtSchedule::Sqrt) => (round as f64).sqrt().ceil() as u64,
        }
    }
}

/// Policies runnable over a fixed expert pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    DucbClipped,
    DucbMom,
    Ucb1,
    EpsilonGreedy,
    First,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::DucbClipped => "ducb-clipped",
            PolicyKind::DucbMom => "ducb-mom",
            PolicyKind::Ucb1 => "ucb1",
            PolicyKind::EpsilonGreedy => "epsilon-greedy",
            PolicyKind::First => "first",
        }
    }

    pub fn estimator(&self) -> Option<EstimatorKind> {
        match self {
            PolicyKind::DucbClipped => Some(EstimatorKind::Clipped),
            PolicyKind::DucbMom => Some(EstimatorKind::Mom),
            _ => None,
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ducb-clipped" => Ok(PolicyKind::DucbClipped),
            "ducb-mom" | "ducb" => Ok(PolicyKind::DucbMom),
            "ucb1" => Ok(PolicyKind::Ucb1),
            "epsilon-greedy" => Ok(PolicyKind::EpsilonGreedy),
            "first" => Ok(PolicyKind::First),
            other => Err(Error::Malformed {
                what: "policy name",
                detail: other.to_string(),
            }),
        }
    }
}

/// Shared policy settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub clipped: ClippedConfig,
    pub mom: MoMConfig,
    pub update_every: UpdateEvery,
    /// Exploration probability for the epsilon-greedy baseline.
    pub epsilon: f64,
    /// Uniform-exploration rounds for the explore-then-commit baseline.
    pub first_explore: u64,
    /// Record every expert's index in each round's record.
    pub record_indices: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            clipped: ClippedConfig::practice(),
            mom: MoMConfig::practice(),
            update_every: UpdateEvery::default(),
            epsilon: 0.06,
            first_explore: 100,
            record_indices: false,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        self.clipped.validate()?;
        self.mom.validate()?;
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                value: self.epsilon,
            });
        }
        Ok(())
    }
}

/// One round of a policy run. `indices` holds the U_k values the choice was
/// an argmax of; it is empty for rounds decided by randomization (the
/// initial round, exploration rounds) or when index recording is off.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: u64,
    pub expert: usize,
    pub arm: usize,
    pub reward: f64,
    /// Instantaneous regret; synthetic environments only.
    pub regret: Option<f64>,
    pub indices: Vec<f64>,
}

/// A complete run of one policy.
#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    pub policy: String,
    pub seed: u64,
    pub records: Vec<RoundRecord>,
    pub pull_counts: Vec<u64>,
    pub final_cum_regret: Option<f64>,
    pub wall_time_s: f64,
    pub warnings: Vec<String>,
}

/// JSON summary written next to each trace CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceSummary {
    pub policy: String,
    pub seed: u64,
    pub rounds: usize,
    pub final_cum_regret: Option<f64>,
    pub pull_counts: Vec<u64>,
    pub wall_time_s: f64,
    pub warnings: Vec<String>,
}

impl EpisodeTrace {
    /// Running sum of instantaneous regret; `None` in dataset mode.
    pub fn cumulative_regret(&self) -> Option<Vec<f64>> {
        let mut total = 0.0;
        let mut out = Vec::with_capacity(self.records.len());
        for rec in &self.records {
            total += rec.regret?;
            out.push(total);
        }
        Some(out)
    }

    pub fn summary(&self) -> TraceSummary {
        TraceSummary {
            policy: self.policy.clone(),
            seed: self.seed,
            rounds: self.records.len(),
            final_cum_regret: self.final_cum_regret,
            pull_counts: self.pull_counts.clone(),
            wall_time_s: self.wall_time_s,
            warnings: self.warnings.clone(),
        }
    }

    /// CSV with header `t,expert,arm,reward,regret[,index_0..]`; regret and
    /// index cells are blank where unavailable. Output depends only on the
    /// recorded rounds, so identical (config, seed) pairs produce identical
    /// bytes.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let num_indices = self
            .records
            .iter()
            .map(|r| r.indices.len())
            .max()
            .unwrap_or(0);
        write!(w, "t,expert,arm,reward,regret")?;
        for i in 0..num_indices {
            write!(w, ",index_{i}")?;
        }
        writeln!(w)?;
        for rec in &self.records {
            write!(w, "{},{},{},{}", rec.t, rec.expert, rec.arm, rec.reward)?;
            match rec.regret {
                Some(r) => write!(w, ",{r}")?,
                None => write!(w, ",")?,
            }
            for i in 0..num_indices {
                match rec.indices.get(i) {
                    Some(v) => write!(w, ",{v}")?,
                    None => write!(w, ",")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Cached per-expert indices with lazily extended target-probability columns.
pub(crate) struct IndexEngine {
    estimator: EstimatorKind,
    clipped: ClippedConfig,
    mom: MoMConfig,
    update_every: UpdateEvery,
    indices: Vec<ExpertIndex>,
    prob_cache: Vec<Vec<f64>>,
    next_refresh: u64,
    dirty: bool,
}

impl IndexEngine {
    pub(crate) fn new(
        num_experts: usize,
        estimator: EstimatorKind,
        clipped: ClippedConfig,
        mom: MoMConfig,
        update_every: UpdateEvery,
    ) -> Self {
        IndexEngine {
            estimator,
            clipped,
            mom,
            update_every,
            indices: vec![ExpertIndex::insufficient_data(); num_experts],
            prob_cache: vec![Vec::new(); num_experts],
            next_refresh: 2,
            dirty: false,
        }
    }

    /// Newborn experts start at the sentinel until the next refresh.
    pub(crate) fn grow_pool(&mut self, num_experts: usize) {
        self.indices
            .resize(num_experts, ExpertIndex::insufficient_data());
        self.prob_cache.resize(num_experts, Vec::new());
        self.dirty = true;
    }

    /// Force a refresh at the next opportunity (divergences changed).
    pub(crate) fn mark_dirty(&mut self) {
        self.dirty = true;
    }

    pub(crate) fn indices(&self) -> &[ExpertIndex] {
        &self.indices
    }

    /// Recompute indices when the schedule or a dirty flag says so.
    pub(crate) fn maybe_refresh(
        &mut self,
        round: u64,
        pool: &[Expert],
        log: &SampleLog,
        divergences: &DivergenceMatrix,
    ) -> Result<()> {
        if log.is_empty() {
            return Ok(());
        }
        if !self.dirty && round < self.next_refresh {
            return Ok(());
        }
        self.dirty = false;
        self.next_refresh = round + self.update_every.spacing(round);
        let t = log.len() as u64;
        for (k, expert) in pool.iter().enumerate() {
            let cache = &mut self.prob_cache[k];
            for rec in &log.records()[cache.len()..] {
                cache.push(expert.prob(&rec.context, rec.arm)?);
            }
            let probs: &[f64] = cache.as_slice();
            self.indices[k] = match self.estimator {
                EstimatorKind::Clipped => {
                    clipped_index_with(log, &probs, divergences.m_row(k), t, &self.clipped)?
                }
                EstimatorKind::Mom => {
                    mom_index_with(log, &probs, divergences.sigma_row(k), t, &self.mom)?
                }
            };
        }
        Ok(())
    }
}

/// Mutable state of one policy run.
pub struct PolicyState {
    kind: PolicyKind,
    config: PolicyConfig,
    pool: Vec<Expert>,
    divergences: DivergenceMatrix,
    log: SampleLog,
    t: u64,
    pull_counts: Vec<u64>,
    reward_sums: Vec<f64>,
    rng: ChaCha8Rng,
    engine: IndexEngine,
    committed: Option<usize>,
    true_means: Option<Vec<f64>>,
    best_mean: f64,
}

impl PolicyState {
    pub fn new(
        pool: Vec<Expert>,
        divergences: DivergenceMatrix,
        kind: PolicyKind,
        config: PolicyConfig,
        num_arms: usize,
        seed: u64,
        true_means: Option<Vec<f64>>,
    ) -> Result<Self> {
        config.validate()?;
        if pool.is_empty() {
            return Err(Error::Malformed {
                what: "expert pool",
                detail: "no experts".into(),
            });
        }
        if divergences.len() != pool.len() {
            return Err(Error::DimensionMismatch {
                what: "divergence matrix",
                expected: pool.len(),
                found: divergences.len(),
            });
        }
        for e in &pool {
            if e.num_arms() != num_arms {
                return Err(Error::DimensionMismatch {
                    what: "expert arms",
                    expected: num_arms,
                    found: e.num_arms(),
                });
            }
        }
        if let Some(mu) = &true_means {
            if mu.len() != pool.len() {
                return Err(Error::DimensionMismatch {
                    what: "true means",
                    expected: pool.len(),
                    found: mu.len(),
                });
            }
        }
        let best_mean = true_means
            .as_ref()
            .map(|mu| mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .unwrap_or(f64::NAN);
        let n = pool.len();
        let estimator = kind.estimator().unwrap_or(EstimatorKind::Mom);
        Ok(PolicyState {
            kind,
            engine: IndexEngine::new(
                n,
                estimator,
                config.clipped,
                config.mom,
                config.update_every,
            ),
            config,
            pool,
            divergences,
            log: SampleLog::new(num_arms),
            t: 1,
            pull_counts: vec![0; n],
            reward_sums: vec![0.0; n],
            rng: derive_rng(seed, STREAM_POLICY),
            committed: None,
            true_means,
            best_mean,
        })
    }

    pub fn round(&self) -> u64 {
        self.t
    }

    pub fn pull_counts(&self) -> &[u64] {
        &self.pull_counts
    }

    pub fn log(&self) -> &SampleLog {
        &self.log
    }

    pub fn pool(&self) -> &[Expert] {
        &self.pool
    }

    /// Play one round: choose an expert, draw its arm, observe the reward
    /// from `env`, and append everything to the log.
    pub fn step(&mut self, context: ContextValue, env: &mut Environment) -> Result<RoundRecord> {
        let (chosen, indices) = match self.kind {
            PolicyKind::DucbClipped | PolicyKind::DucbMom => {
                if self.t == 1 {
                    self.init_step()
                } else {
                    self.ducb_step()?
                }
            }
            PolicyKind::Ucb1 => self.ucb1_step(),
            PolicyKind::EpsilonGreedy => self.epsilon_greedy_step(),
            PolicyKind::First => self.first_step(),
        };
        self.finish_round(context, chosen, indices, env)
    }

    /// Round one: a uniformly random expert.
    fn init_step(&mut self) -> (usize, Vec<f64>) {
        (self.rng.random_range(0..self.pool.len()), Vec::new())
    }

    /// Argmax of the cached estimator indices; ties go to the lowest id.
    fn ducb_step(&mut self) -> Result<(usize, Vec<f64>)> {
        self.engine
            .maybe_refresh(self.t, &self.pool, &self.log, &self.divergences)?;
        let ucbs: Vec<f64> = self.engine.indices().iter().map(ExpertIndex::ucb).collect();
        let chosen = argmax(&ucbs);
        let recorded = if self.config.record_indices {
            ucbs
        } else {
            Vec::new()
        };
        Ok((chosen, recorded))
    }

    /// UCB-1 over experts with no information sharing: round-robin until
    /// every expert has one pull, then `mean_k + sqrt(2 ln t / n_k)`.
    fn ucb1_step(&mut self) -> (usize, Vec<f64>) {
        let n = self.pool.len() as u64;
        if self.t <= n {
            return ((self.t - 1) as usize, Vec::new());
        }
        let ln_t = (self.t as f64).ln();
        let ucbs: Vec<f64> = self
            .pull_counts
            .iter()
            .zip(&self.reward_sums)
            .map(|(&c, &s)| s / c as f64 + (2.0 * ln_t / c as f64).sqrt())
            .collect();
        let chosen = argmax(&ucbs);
        let recorded = if self.config.record_indices {
            ucbs
        } else {
            Vec::new()
        };
        (chosen, recorded)
    }

    fn own_means(&self) -> Vec<f64> {
        self.pull_counts
            .iter()
            .zip(&self.reward_sums)
            .map(|(&c, &s)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect()
    }

    /// With probability epsilon a uniform expert, otherwise the best own-pull
    /// sample mean (unpulled experts count as zero).
    fn epsilon_greedy_step(&mut self) -> (usize, Vec<f64>) {
        let u: f64 = self.rng.random();
        if u < self.config.epsilon {
            return (self.rng.random_range(0..self.pool.len()), Vec::new());
        }
        let means = self.own_means();
        let chosen = argmax(&means);
        let recorded = if self.config.record_indices {
            means
        } else {
            Vec::new()
        };
        (chosen, recorded)
    }

    /// Uniform exploration for `first_explore` rounds, then commit forever to
    /// the empirical best.
    fn first_step(&mut self) -> (usize, Vec<f64>) {
        if self.t <= self.config.first_explore {
            return (self.rng.random_range(0..self.pool.len()), Vec::new());
        }
        if self.committed.is_none() {
            let means = self.own_means();
            self.committed = Some(argmax(&means));
        }
        (self.committed.expect("just set"), Vec::new())
    }

    fn finish_round(
        &mut self,
        context: ContextValue,
        chosen: usize,
        indices: Vec<f64>,
        env: &mut Environment,
    ) -> Result<RoundRecord> {
        let (arm, behavior_prob) = self.pool[chosen].sample_arm(&context, &mut self.rng)?;
        let reward = env.reward(&context, arm)?;
        self.log.push(SampleRecord {
            round: self.t,
            expert: chosen,
            context,
            arm,
            reward,
            behavior_prob,
        })?;
        self.pull_counts[chosen] += 1;
        self.reward_sums[chosen] += reward;
        let regret = self
            .true_means
            .as_ref()
            .map(|mu| self.best_mean - mu[chosen]);
        let record = RoundRecord {
            t: self.t,
            expert: chosen,
            arm,
            reward,
            regret,
            indices,
        };
        self.t += 1;
        Ok(record)
    }
}

/// Run `kind` for `horizon` rounds over a fixed expert pool.
///
/// A dataset environment that runs out of rows truncates the trace with a
/// warning. Identical (inputs, seed) produce bitwise-identical traces.
pub fn run_policy(
    env: &mut Environment,
    pool: &[Expert],
    divergences: &DivergenceMatrix,
    kind: PolicyKind,
    config: &PolicyConfig,
    horizon: u64,
    seed: u64,
) -> Result<EpisodeTrace> {
    let start = Instant::now();
    let true_means = env.true_means(pool)?;
    let mut state = PolicyState::new(
        pool.to_vec(),
        divergences.clone(),
        kind,
        *config,
        env.num_arms(),
        seed,
        true_means,
    )?;
    let mut records = Vec::with_capacity(horizon as usize);
    let mut warnings = Vec::new();
    for _ in 0..horizon {
        let context = match env.next_context() {
            Ok(c) => c,
            Err(Error::DatasetExhausted { rows }) => {
                warnings.push(format!(
                    "dataset exhausted after {rows} rows; trace truncated"
                ));
                break;
            }
            Err(e) => return Err(e),
        };
        records.push(state.step(context, env)?);
    }
    let final_cum_regret = records.iter().map(|r| r.regret).sum::<Option<f64>>();
    Ok(EpisodeTrace {
        policy: kind.name().to_string(),
        seed,
        pull_counts: state.pull_counts.clone(),
        records,
        final_cum_regret,
        wall_time_s: start.elapsed().as_secs_f64(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::exact_divergence_matrix;
    use crate::env::TabularEnvironment;
    use crate::experts::TabularExpert;

    fn tab(rows: Vec<Vec<f64>>) -> Expert {
        Expert::Tabular(TabularExpert::new(rows).unwrap())
    }

    fn two_expert_setup(seed: u64) -> (Environment, Vec<Expert>, DivergenceMatrix) {
        let env =
            TabularEnvironment::new(vec![0.5, 0.5], vec![vec![0.9, 0.1], vec![0.8, 0.2]], seed)
                .unwrap();
        let experts = vec![
            tab(vec![vec![0.9, 0.1], vec![0.85, 0.15]]),
            tab(vec![vec![0.2, 0.8], vec![0.3, 0.7]]),
        ];
        let div = exact_divergence_matrix(&experts, env.context_probs()).unwrap();
        (Environment::Tabular(env), experts, div)
    }

    #[test]
    fn argmax_choice_matches_recorded_indices() {
        let (mut env, experts, div) = two_expert_setup(3);
        let config = PolicyConfig {
            record_indices: true,
            ..PolicyConfig::default()
        };
        let trace = run_policy(
            &mut env,
            &experts,
            &div,
            PolicyKind::DucbMom,
            &config,
            300,
            7,
        )
        .unwrap();
        for rec in trace.records.iter().filter(|r| !r.indices.is_empty()) {
            assert_eq!(rec.expert, argmax(&rec.indices), "round {}", rec.t);
        }
    }

    #[test]
    fn cumulative_regret_is_nondecreasing_and_bounded() {
        let (mut env, experts, div) = two_expert_setup(5);
        let mus: Vec<f64> = match &env {
            Environment::Tabular(e) => experts
                .iter()
                .map(|x| e.true_expert_mean(x).unwrap())
                .collect(),
            _ => unreachable!(),
        };
        let best = mus.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let max_gap = mus.iter().map(|m| best - m).fold(0.0, f64::max);
        for kind in [
            PolicyKind::DucbMom,
            PolicyKind::Ucb1,
            PolicyKind::EpsilonGreedy,
            PolicyKind::First,
        ] {
            let trace = run_policy(
                &mut env,
                &experts,
                &div,
                kind,
                &PolicyConfig::default(),
                500,
                11,
            )
            .unwrap();
            let cum = trace.cumulative_regret().unwrap();
            let mut prev = 0.0;
            for (i, &c) in cum.iter().enumerate() {
                assert!(c >= prev - 1e-12);
                assert!(c <= (i as f64 + 1.0) * max_gap + 1e-9);
                prev = c;
            }
            for rec in &trace.records {
                assert!(rec.regret.unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn ucb1_round_robin_then_formula() {
        let (mut env, experts, div) = two_expert_setup(1);
        let config = PolicyConfig {
            record_indices: true,
            ..PolicyConfig::default()
        };
        let trace = run_policy(&mut env, &experts, &div, PolicyKind::Ucb1, &config, 10, 2).unwrap();
        assert_eq!(trace.records[0].expert, 0);
        assert_eq!(trace.records[1].expert, 1);
        // Round 3 indices follow mean + sqrt(2 ln 3 / 1).
        let r0 = trace.records[0].reward;
        let r1 = trace.records[1].reward;
        let bonus = (2.0 * 3.0f64.ln()).sqrt();
        let idx = &trace.records[2].indices;
        assert!((idx[0] - (r0 + bonus)).abs() < 1e-12);
        assert!((idx[1] - (r1 + bonus)).abs() < 1e-12);
    }

    #[test]
    fn single_expert_is_always_pulled() {
        let env = TabularEnvironment::new(vec![1.0], vec![vec![0.5, 0.5]], 4).unwrap();
        let mut env = Environment::Tabular(env);
        let experts = vec![tab(vec![vec![0.5, 0.5]])];
        let div = DivergenceMatrix::identity(1);
        for kind in [PolicyKind::DucbClipped, PolicyKind::Ucb1, PolicyKind::First] {
            let trace = run_policy(
                &mut env,
                &experts,
                &div,
                kind,
                &PolicyConfig::default(),
                50,
                0,
            )
            .unwrap();
            assert!(trace.records.iter().all(|r| r.expert == 0));
        }
    }

    #[test]
    fn identical_experts_incur_zero_regret() {
        let env = TabularEnvironment::new(vec![0.5, 0.5], vec![vec![0.9, 0.1], vec![0.2, 0.8]], 6)
            .unwrap();
        let mut env = Environment::Tabular(env);
        let e = tab(vec![vec![0.6, 0.4], vec![0.4, 0.6]]);
        let experts = vec![e.clone(), e.clone(), e];
        let div = exact_divergence_matrix(&experts, &[0.5, 0.5]).unwrap();
        for kind in [
            PolicyKind::DucbClipped,
            PolicyKind::DucbMom,
            PolicyKind::Ucb1,
            PolicyKind::EpsilonGreedy,
            PolicyKind::First,
        ] {
            let trace = run_policy(
                &mut env,
                &experts,
                &div,
                kind,
                &PolicyConfig::default(),
                200,
                13,
            )
            .unwrap();
            assert_eq!(trace.final_cum_regret, Some(0.0));
        }
    }

    #[test]
    fn traces_are_deterministic_given_seed() {
        let (mut env_a, experts, div) = two_expert_setup(8);
        let mut env_b = env_a.clone();
        let config = PolicyConfig {
            record_indices: true,
            ..PolicyConfig::default()
        };
        let a = run_policy(
            &mut env_a,
            &experts,
            &div,
            PolicyKind::DucbClipped,
            &config,
            200,
            21,
        )
        .unwrap();
        let b = run_policy(
            &mut env_b,
            &experts,
            &div,
            PolicyKind::DucbClipped,
            &config,
            200,
            21,
        )
        .unwrap();
        assert_eq!(a.csv_string(), b.csv_string());
    }

    #[test]
    fn sqrt_schedule_still_converges_to_best_expert() {
        let (mut env, experts, div) = two_expert_setup(12);
        let config = PolicyConfig {
            update_every: UpdateEvery::Schedule(SqrtSchedule::Sqrt),
            ..PolicyConfig::default()
        };
        let trace = run_policy(
            &mut env,
            &experts,
            &div,
            PolicyKind::DucbMom,
            &config,
            2000,
            3,
        )
        .unwrap();
        let late_best = trace.records[1500..]
            .iter()
            .filter(|r| r.expert == 0)
            .count();
        assert!(late_best as f64 / 500.0 > 0.8, "late_best={late_best}");
    }

    #[test]
    fn csv_layout_is_stable() {
        let trace = EpisodeTrace {
            policy: "ducb-mom".into(),
            seed: 1,
            records: vec![
                RoundRecord {
                    t: 1,
                    expert: 1,
                    arm: 0,
                    reward: 1.0,
                    regret: Some(0.25),
                    indices: vec![],
                },
                RoundRecord {
                    t: 2,
                    expert: 0,
                    arm: 1,
                    reward: 0.0,
                    regret: Some(0.0),
                    indices: vec![1.5, 0.75],
                },
            ],
            pull_counts: vec![1, 1],
            final_cum_regret: Some(0.25),
            wall_time_s: 0.01,
            warnings: vec![],
        };
        let csv = trace.csv_string();
        let expected = "t,expert,arm,reward,regret,index_0,index_1\n\
                        1,1,0,1,0.25,,\n\
                        2,0,1,0,0,1.5,0.75\n";
        assert_eq!(csv, expected);
    }
}
