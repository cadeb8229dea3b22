//! Environments: nature's fixed joint distribution over contexts, arms and rewards.
//!
//! [`TabularEnvironment`] models a finite context set with Bernoulli rewards,
//! so expert means and divergences are exactly computable. In this model
//! the joint distribution factors into the context marginal and the
//! reward-given-(arm, context) table held here, with the arm-given-context
//! factor supplied by whichever expert is deployed.
//! [`DatasetEnvironment`] replays a multi-class classification dataset as a
//! bandit: reward 1 exactly when the chosen arm equals the row label.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experts::{ContextValue, Expert};
use crate::rng::derive_rng;

/// One round's observed outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub context: ContextValue,
    pub arm: usize,
    pub reward: f64,
}

/// Finite tabular environment: a context marginal and a C x K matrix of
/// Bernoulli reward means.
#[derive(Debug, Clone)]
pub struct TabularEnvironment {
    context_probs: Vec<f64>,
    reward_means: Vec<Vec<f64>>,
    seed: u64,
    rng: ChaCha8Rng,
}

impl TabularEnvironment {
    pub fn new(context_probs: Vec<f64>, reward_means: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        if context_probs.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        let mut sum = 0.0;
        for (i, &p) in context_probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidProbability { index: i, value: p });
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::DistributionSum { sum, tol: 1e-12 });
        }
        if reward_means.len() != context_probs.len() {
            return Err(Error::DimensionMismatch {
                what: "reward_means rows",
                expected: context_probs.len(),
                found: reward_means.len(),
            });
        }
        let k = reward_means.first().map_or(0, Vec::len);
        if k == 0 {
            return Err(Error::EmptyDistribution);
        }
        for row in &reward_means {
            if row.len() != k {
                return Err(Error::DimensionMismatch {
                    what: "reward_means row",
                    expected: k,
                    found: row.len(),
                });
            }
            for &m in row {
                if !m.is_finite() || !(0.0..=1.0).contains(&m) {
                    return Err(Error::RewardMeanRange { value: m });
                }
            }
        }
        Ok(TabularEnvironment {
            context_probs,
            reward_means,
            seed,
            rng: derive_rng(seed, crate::rng::STREAM_ENV),
        })
    }

    pub fn num_contexts(&self) -> usize {
        self.context_probs.len()
    }

    pub fn num_arms(&self) -> usize {
        self.reward_means[0].len()
    }

    pub fn context_probs(&self) -> &[f64] {
        &self.context_probs
    }

    pub fn reward_means(&self) -> &[Vec<f64>] {
        &self.reward_means
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Replace the draw stream; used to give each replication its own stream.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.rng = derive_rng(seed, crate::rng::STREAM_ENV);
    }

    /// Draw a context id from the context marginal.
    pub fn draw_context(&mut self) -> usize {
        let u: f64 = self.rng.random();
        let mut cum = 0.0;
        let mut last = 0;
        for (i, &p) in self.context_probs.iter().enumerate() {
            if p > 0.0 {
                last = i;
                cum += p;
                if u < cum {
                    return i;
                }
            }
        }
        last
    }

    /// Bernoulli reward draw for (context, arm).
    pub fn sample_reward(&mut self, context: usize, arm: usize) -> Result<f64> {
        let mean = self.reward_mean(context, arm)?;
        let u: f64 = self.rng.random();
        Ok(if u < mean { 1.0 } else { 0.0 })
    }

    fn reward_mean(&self, context: usize, arm: usize) -> Result<f64> {
        let row = self
            .reward_means
            .get(context)
            .ok_or(Error::ContextOutOfRange {
                context,
                num_contexts: self.num_contexts(),
            })?;
        row.get(arm).copied().ok_or(Error::ArmOutOfRange {
            arm,
            num_arms: row.len(),
        })
    }

    /// Exact expected reward of an expert under this environment:
    /// sum over contexts and arms of p(x) pi(v|x) mean(x, v).
    pub fn true_expert_mean(&self, expert: &Expert) -> Result<f64> {
        let mut total = 0.0;
        for (x, &px) in self.context_probs.iter().enumerate() {
            let dist = expert.evaluate(&ContextValue::Discrete(x))?;
            if dist.len() != self.num_arms() {
                return Err(Error::DimensionMismatch {
                    what: "expert arms",
                    expected: self.num_arms(),
                    found: dist.len(),
                });
            }
            let mut inner = 0.0;
            for (v, &pv) in dist.iter().enumerate() {
                inner += pv * self.reward_means[x][v];
            }
            total += px * inner;
        }
        Ok(total)
    }
}

/// Bandit view of a multi-class dataset: one row per round, reward is the
/// 0/1 indicator that the chosen arm equals the row label.
#[derive(Debug, Clone)]
pub struct DatasetEnvironment {
    rows: Vec<(Vec<f64>, usize)>,
    cursor: usize,
    num_arms: usize,
    dim: usize,
}

impl DatasetEnvironment {
    pub fn from_rows(
        rows: Vec<(Vec<f64>, usize)>,
        num_arms: usize,
        shuffle: bool,
        seed: u64,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Malformed {
                what: "dataset",
                detail: "no rows".into(),
            });
        }
        let dim = rows[0].0.len();
        for (features, label) in &rows {
            if features.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "dataset features",
                    expected: dim,
                    found: features.len(),
                });
            }
            if *label >= num_arms {
                return Err(Error::ArmOutOfRange {
                    arm: *label,
                    num_arms,
                });
            }
        }
        let mut rows = rows;
        if shuffle {
            use rand::seq::SliceRandom;
            let mut rng = derive_rng(seed, crate::rng::STREAM_ENV);
            rows.shuffle(&mut rng);
        }
        Ok(DatasetEnvironment {
            rows,
            cursor: 0,
            num_arms,
            dim,
        })
    }

    /// Load from CSV: first column integer label in `[0, num_arms)`,
    /// remaining columns real features.
    pub fn from_csv(path: &Path, num_arms: usize, shuffle: bool, seed: u64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)?;
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let mut fields = record.iter();
            let label: usize = fields
                .next()
                .ok_or_else(|| Error::Malformed {
                    what: "dataset row",
                    detail: "empty row".into(),
                })?
                .trim()
                .parse()
                .map_err(|e| Error::Malformed {
                    what: "dataset label",
                    detail: format!("{e}"),
                })?;
            let features = fields
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|e| Error::Malformed {
                        what: "dataset feature",
                        detail: format!("{e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push((features, label));
        }
        Self::from_rows(rows, num_arms, shuffle, seed)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn remaining(&self) -> usize {
        self.rows.len() - self.cursor
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn reset(&mut self) {
        self.cursor = 0;
    }

    /// All rows in presentation order.
    pub fn rows(&self) -> &[(Vec<f64>, usize)] {
        &self.rows
    }

    /// Features of the current row, if any rows remain.
    pub fn peek_features(&self) -> Option<&[f64]> {
        self.rows.get(self.cursor).map(|(f, _)| f.as_slice())
    }

    /// Consume the current row with the chosen arm; reward is
    /// `1` iff the arm equals the row label.
    pub fn dataset_step(&mut self, arm: usize) -> Result<RoundOutcome> {
        if arm >= self.num_arms {
            return Err(Error::ArmOutOfRange {
                arm,
                num_arms: self.num_arms,
            });
        }
        let (features, label) = self
            .rows
            .get(self.cursor)
            .ok_or(Error::DatasetExhausted {
                rows: self.rows.len(),
            })?
            .clone();
        self.cursor += 1;
        Ok(RoundOutcome {
            context: ContextValue::Features(features),
            arm,
            reward: if arm == label { 1.0 } else { 0.0 },
        })
    }
}

/// On-disk environment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnvSpec {
    Tabular {
        contexts: Vec<f64>,
        reward_means: Vec<Vec<f64>>,
        seed: u64,
    },
    Dataset {
        dataset_path: PathBuf,
        num_arms: usize,
        #[serde(default)]
        shuffle: bool,
        seed: u64,
    },
}

impl EnvSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(Error::from)
    }

    /// Instantiate the environment. Relative dataset paths resolve against
    /// `base_dir` when given.
    pub fn build(&self, base_dir: Option<&Path>) -> Result<Environment> {
        match self {
            EnvSpec::Tabular {
                contexts,
                reward_means,
                seed,
            } => Ok(Environment::Tabular(TabularEnvironment::new(
                contexts.clone(),
                reward_means.clone(),
                *seed,
            )?)),
            EnvSpec::Dataset {
                dataset_path,
                num_arms,
                shuffle,
                seed,
            } => {
                let path = if dataset_path.is_relative() {
                    base_dir
                        .map(|d| d.join(dataset_path))
                        .unwrap_or_else(|| dataset_path.clone())
                } else {
                    dataset_path.clone()
                };
                Ok(Environment::Dataset(DatasetEnvironment::from_csv(
                    &path, *num_arms, *shuffle, *seed,
                )?))
            }
        }
    }
}

/// Runtime environment handle used by the policy loop.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Environment {
    Tabular(TabularEnvironment),
    Dataset(DatasetEnvironment),
}

impl Environment {
    pub fn num_arms(&self) -> usize {
        match self {
            Environment::Tabular(e) => e.num_arms(),
            Environment::Dataset(e) => e.num_arms(),
        }
    }

    /// Context for the next round. `Err(DatasetExhausted)` once a dataset
    /// runs out of rows.
    pub fn next_context(&mut self) -> Result<ContextValue> {
        match self {
            Environment::Tabular(e) => Ok(ContextValue::Discrete(e.draw_context())),
            Environment::Dataset(e) => e
                .peek_features()
                .map(|f| ContextValue::Features(f.to_vec()))
                .ok_or(Error::DatasetExhausted { rows: e.len() }),
        }
    }

    /// Reward for pulling `arm` in the round whose context was just drawn.
    /// Must be called exactly once per `next_context`.
    pub fn reward(&mut self, context: &ContextValue, arm: usize) -> Result<f64> {
        match self {
            Environment::Tabular(e) => match context {
                ContextValue::Discrete(i) => e.sample_reward(*i, arm),
                ContextValue::Features(_) => Err(Error::Malformed {
                    what: "context",
                    detail: "tabular environment expects a discrete context".into(),
                }),
            },
            Environment::Dataset(e) => Ok(e.dataset_step(arm)?.reward),
        }
    }

    /// Exact expert means; available in tabular mode only.
    pub fn true_means(&self, experts: &[Expert]) -> Result<Option<Vec<f64>>> {
        match self {
            Environment::Tabular(e) => experts
                .iter()
                .map(|x| e.true_expert_mean(x))
                .collect::<Result<Vec<f64>>>()
                .map(Some),
            Environment::Dataset(_) => Ok(None),
        }
    }

    /// Per-replication reseeding. Dataset order is a property of the data
    /// (fixed by its spec seed), so only tabular draw streams change.
    pub fn reseed(&mut self, seed: u64) {
        match self {
            Environment::Tabular(e) => e.reseed(seed),
            Environment::Dataset(e) => e.reset(),
        }
    }
}
