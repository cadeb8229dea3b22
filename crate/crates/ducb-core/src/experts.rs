//! Stochastic experts: conditional distributions over arms given a context.
//!
//! Two families are supported. [`TabularExpert`] stores an explicit
//! probability row per discrete context. [`SoftmaxExpert`] scores feature
//! vectors with a linear model and a temperature, then mixes the softmax
//! output with the uniform distribution so that every arm keeps probability
//! at least [`PROB_FLOOR`]. The floor keeps importance ratios finite, which
//! the divergence-based estimators rely on.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability floor for softmax experts: output is
/// `(1 - K*PROB_FLOOR) * softmax + PROB_FLOOR`.
pub const PROB_FLOOR: f64 = 1e-4;

/// Tolerance for "row sums to one" validation on tabular experts.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// A context observed by an expert: either a discrete context id or a raw
/// feature vector. A discrete id `i` is treated as the one-hot vector `e_i`
/// when handed to a feature-based expert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ContextValue {
    Discrete(usize),
    Features(Vec<f64>),
}

impl ContextValue {
    /// Dimension when interpreted as a feature vector (`dim` needed for the
    /// one-hot encoding of a discrete id).
    pub fn to_features(&self, dim: usize) -> Vec<f64> {
        match self {
            ContextValue::Discrete(i) => {
                let mut v = vec![0.0; dim];
                if *i < dim {
                    v[*i] = 1.0;
                }
                v
            }
            ContextValue::Features(x) => x.clone(),
        }
    }
}

fn validate_rows(probs: &[Vec<f64>]) -> Result<()> {
    if probs.is_empty() || probs[0].is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let k = probs[0].len();
    for row in probs {
        if row.len() != k {
            return Err(Error::DimensionMismatch {
                what: "tabular expert row",
                expected: k,
                found: row.len(),
            });
        }
        let mut sum = 0.0;
        for (i, &p) in row.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidProbability { index: i, value: p });
            }
            sum += p;
        }
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::DistributionSum {
                sum,
                tol: ROW_SUM_TOL,
            });
        }
    }
    Ok(())
}

/// Expert given by an explicit C x K probability table, one row per context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TabularExpertRepr", into = "TabularExpertRepr")]
pub struct TabularExpert {
    probs: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct TabularExpertRepr {
    probs: Vec<Vec<f64>>,
}

impl TryFrom<TabularExpertRepr> for TabularExpert {
    type Error = Error;
    fn try_from(repr: TabularExpertRepr) -> Result<Self> {
        TabularExpert::new(repr.probs)
    }
}

impl From<TabularExpert> for TabularExpertRepr {
    fn from(e: TabularExpert) -> Self {
        TabularExpertRepr { probs: e.probs }
    }
}

impl TabularExpert {
    /// Validates that every row is a probability vector (entries >= 0,
    /// sum within [`ROW_SUM_TOL`] of one).
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        validate_rows(&probs)?;
        Ok(TabularExpert { probs })
    }

    /// Uniform expert over `num_arms` arms for each of `num_contexts` contexts.
    pub fn uniform(num_contexts: usize, num_arms: usize) -> Self {
        let row = vec![1.0 / num_arms as f64; num_arms];
        TabularExpert {
            probs: vec![row; num_contexts],
        }
    }

    pub fn num_contexts(&self) -> usize {
        self.probs.len()
    }

    pub fn num_arms(&self) -> usize {
        self.probs[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn row(&self, context: usize) -> Result<&[f64]> {
        self.probs
            .get(context)
            .map(|r| r.as_slice())
            .ok_or(Error::ContextOutOfRange {
                context,
                num_contexts: self.probs.len(),
            })
    }
}

/// Expert backed by a linear model: scores `(w_k . x + b_k) / temperature`,
/// softmax over arms, then uniform mixing down to the probability floor.
///
/// A model with zero-length weight rows ignores the context entirely and is
/// the canonical "uniform over arms for any context" expert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SoftmaxExpertRepr", into = "SoftmaxExpertRepr")]
pub struct SoftmaxExpert {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    temperature: f64,
}

#[derive(Serialize, Deserialize)]
struct SoftmaxExpertRepr {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    #[serde(default = "default_temperature")]
    temperature: f64,
}

fn default_temperature() -> f64 {
    1.0
}

impl TryFrom<SoftmaxExpertRepr> for SoftmaxExpert {
    type Error = Error;
    fn try_from(repr: SoftmaxExpertRepr) -> Result<Self> {
        SoftmaxExpert::new(repr.weights, repr.bias, repr.temperature)
    }
}

impl From<SoftmaxExpert> for SoftmaxExpertRepr {
    fn from(e: SoftmaxExpert) -> Self {
        SoftmaxExpertRepr {
            weights: e.weights,
            bias: e.bias,
            temperature: e.temperature,
        }
    }
}

impl SoftmaxExpert {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>, temperature: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        if bias.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                what: "softmax bias",
                expected: weights.len(),
                found: bias.len(),
            });
        }
        let dim = weights[0].len();
        for row in &weights {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "softmax weight row",
                    expected: dim,
                    found: row.len(),
                });
            }
        }
        if !temperature.is_finite() || temperature <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "temperature",
                value: temperature,
            });
        }
        let k = weights.len() as f64;
        if k * PROB_FLOOR >= 1.0 {
            return Err(Error::InvalidParameter {
                name: "num_arms (probability floor exceeds budget)",
                value: k,
            });
        }
        Ok(SoftmaxExpert {
            weights,
            bias,
            temperature,
        })
    }

    /// Context-agnostic uniform expert (zero-dimensional weights).
    pub fn uniform(num_arms: usize) -> Self {
        SoftmaxExpert {
            weights: vec![Vec::new(); num_arms],
            bias: vec![0.0; num_arms],
            temperature: 1.0,
        }
    }

    pub fn num_arms(&self) -> usize {
        self.weights.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn scores(&self, context: &ContextValue) -> Result<Vec<f64>> {
        let dim = self.feature_dim();
        let k = self.num_arms();
        let mut scores = vec![0.0; k];
        match context {
            // Discrete id behaves as a one-hot feature vector.
            ContextValue::Discrete(i) => {
                if dim > 0 && *i >= dim {
                    return Err(Error::ContextOutOfRange {
                        context: *i,
                        num_contexts: dim,
                    });
                }
                for (a, s) in scores.iter_mut().enumerate() {
                    let w = if dim > 0 { self.weights[a][*i] } else { 0.0 };
                    *s = (w + self.bias[a]) / self.temperature;
                }
            }
            ContextValue::Features(x) => {
                if dim > 0 && x.len() != dim {
                    return Err(Error::DimensionMismatch {
                        what: "context features",
                        expected: dim,
                        found: x.len(),
                    });
                }
                for (a, s) in scores.iter_mut().enumerate() {
                    let dot: f64 = self.weights[a].iter().zip(x).map(|(w, v)| w * v).sum();
                    *s = (dot + self.bias[a]) / self.temperature;
                }
            }
        }
        Ok(scores)
    }

    fn distribution(&self, context: &ContextValue) -> Result<Vec<f64>> {
        let mut scores = self.scores(context)?;
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for s in scores.iter_mut() {
            *s = (*s - max).exp();
            sum += *s;
        }
        let k = scores.len() as f64;
        let scale = 1.0 - k * PROB_FLOOR;
        for s in scores.iter_mut() {
            *s = scale * (*s / sum) + PROB_FLOOR;
        }
        Ok(scores)
    }
}

/// A stochastic expert pi(v | x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Expert {
    Tabular(TabularExpert),
    Softmax(SoftmaxExpert),
}

impl Expert {
    pub fn num_arms(&self) -> usize {
        match self {
            Expert::Tabular(e) => e.num_arms(),
            Expert::Softmax(e) => e.num_arms(),
        }
    }

    /// Conditional distribution over arms for `context`.
    ///
    /// The result is a probability vector: entries nonnegative, sum within
    /// 1e-9 of one. Softmax experts additionally keep every entry at or
    /// above [`PROB_FLOOR`].
    pub fn evaluate(&self, context: &ContextValue) -> Result<Vec<f64>> {
        match self {
            Expert::Tabular(e) => match context {
                ContextValue::Discrete(i) => Ok(e.row(*i)?.to_vec()),
                ContextValue::Features(_) => Err(Error::Malformed {
                    what: "context",
                    detail: "tabular expert requires a discrete context".into(),
                }),
            },
            Expert::Softmax(e) => e.distribution(context),
        }
    }

    /// Probability of a single arm under `context`.
    pub fn prob(&self, context: &ContextValue, arm: usize) -> Result<f64> {
        match self {
            Expert::Tabular(e) => {
                let row = match context {
                    ContextValue::Discrete(i) => e.row(*i)?,
                    ContextValue::Features(_) => {
                        return Err(Error::Malformed {
                            what: "context",
                            detail: "tabular expert requires a discrete context".into(),
                        })
                    }
                };
                row.get(arm).copied().ok_or(Error::ArmOutOfRange {
                    arm,
                    num_arms: row.len(),
                })
            }
            Expert::Softmax(e) => {
                let dist = e.distribution(context)?;
                dist.get(arm).copied().ok_or(Error::ArmOutOfRange {
                    arm,
                    num_arms: dist.len(),
                })
            }
        }
    }

    /// Draw an arm from the conditional distribution. Returns the chosen arm
    /// together with its behavior probability pi(v | x), which the sample log
    /// stores for later importance reweighting. Arms with zero probability
    /// are never drawn.
    pub fn sample_arm<R: Rng + ?Sized>(
        &self,
        context: &ContextValue,
        rng: &mut R,
    ) -> Result<(usize, f64)> {
        let dist = self.evaluate(context)?;
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut last_positive = None;
        for (arm, &p) in dist.iter().enumerate() {
            if p > 0.0 {
                last_positive = Some((arm, p));
                cum += p;
                if u < cum {
                    return Ok((arm, p));
                }
            }
        }
        // Rounding left u >= cum; fall back to the last arm with mass.
        last_positive.ok_or(Error::EmptyDistribution)
    }

    /// Uniform tabular expert (each of `num_contexts` rows uniform over arms).
    pub fn uniform_tabular(num_contexts: usize, num_arms: usize) -> Self {
        Expert::Tabular(TabularExpert::uniform(num_contexts, num_arms))
    }

    /// Context-agnostic uniform softmax expert.
    pub fn uniform_softmax(num_arms: usize) -> Self {
        Expert::Softmax(SoftmaxExpert::uniform(num_arms))
    }
}
