//! Online cost-sensitive oracle training.
//!
//! Logged bandit interactions are reduced to importance-weighted
//! classification: each (context, arm) pair becomes a training example with
//! sample weight `reward / behavior_prob`. A weighted multinomial logistic
//! regression fit by seeded minibatch SGD stands in for heavier oracle
//! families; batches of bootstrapped, hyperparameter-varied fits keep the
//! spawned experts diverse.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::SampleLog;
use crate::experts::{ContextValue, SoftmaxExpert};
use crate::rng::{derive_rng, derive_seed};

/// Cap on importance weights fed to oracle training. This is a training
/// safeguard only; the bandit estimators never cap their ratios.
pub const WEIGHT_CAP: f64 = 1e4;

/// Fraction of the log resampled (with replacement) per bootstrap expert.
pub const BOOTSTRAP_FRACTION: f64 = 0.8;

/// One importance-weighted classification example.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub features: Vec<f64>,
    pub arm: usize,
    pub weight: f64,
}

/// Trainer settings. The learning rate decays as `learning_rate / sqrt(epoch)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleHyperparams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub minibatch: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for OracleHyperparams {
    fn default() -> Self {
        OracleHyperparams {
            epochs: 5,
            learning_rate: 0.1,
            minibatch: 32,
            temperature: 1.0,
            seed: 0,
        }
    }
}

/// Trainer output; `degenerate` is set when every example weight was zero
/// and the uniform fallback expert was returned.
#[derive(Debug, Clone)]
pub struct TrainedOracle {
    pub expert: SoftmaxExpert,
    pub degenerate: bool,
}

/// Importance weight `reward / behavior_prob`, capped at [`WEIGHT_CAP`].
pub fn make_importance_weight(reward: f64, behavior_prob: f64) -> Result<f64> {
    if !behavior_prob.is_finite() || behavior_prob <= 0.0 {
        return Err(Error::NonPositiveProbability {
            value: behavior_prob,
        });
    }
    Ok((reward / behavior_prob).min(WEIGHT_CAP))
}

/// Fit a softmax expert by weighted multinomial logistic regression.
///
/// Deterministic given (examples, hyperparams): parameters are initialized
/// at zero, epochs shuffle with a seeded generator, and each minibatch
/// applies the weighted-average cross-entropy gradient (normalized by the
/// batch's total weight, so duplicating an example is equivalent to doubling
/// its weight). All-zero weights fall back to the uniform expert with the
/// `degenerate` flag set.
pub fn train_oracle(
    examples: &[TrainingExample],
    num_arms: usize,
    hp: &OracleHyperparams,
) -> Result<TrainedOracle> {
    if num_arms == 0 {
        return Err(Error::EmptyDistribution);
    }
    if examples.is_empty() {
        return Ok(TrainedOracle {
            expert: SoftmaxExpert::uniform(num_arms),
            degenerate: true,
        });
    }
    let dim = examples[0].features.len();
    for ex in examples {
        if ex.features.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "training features",
                expected: dim,
                found: ex.features.len(),
            });
        }
        if ex.arm >= num_arms {
            return Err(Error::ArmOutOfRange {
                arm: ex.arm,
                num_arms,
            });
        }
        if !ex.weight.is_finite() || ex.weight < 0.0 {
            return Err(Error::InvalidParameter {
                name: "example weight",
                value: ex.weight,
            });
        }
    }
    if examples.iter().all(|ex| ex.weight == 0.0) {
        return Ok(TrainedOracle {
            expert: SoftmaxExpert::uniform(num_arms),
            degenerate: true,
        });
    }

    let temp = hp.temperature;
    let mut weights = vec![vec![0.0; dim]; num_arms];
    let mut bias = vec![0.0; num_arms];
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let batch = hp.minibatch.max(1);

    for epoch in 1..=hp.epochs {
        let lr = hp.learning_rate / (epoch as f64).sqrt();
        let mut rng = derive_rng(hp.seed, epoch as u64);
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let batch_weight: f64 = chunk.iter().map(|&i| examples[i].weight).sum();
            if batch_weight == 0.0 {
                continue;
            }
            let mut grad_w = vec![vec![0.0; dim]; num_arms];
            let mut grad_b = vec![0.0; num_arms];
            for &i in chunk {
                let ex = &examples[i];
                if ex.weight == 0.0 {
                    continue;
                }
                let probs = raw_softmax(&weights, &bias, temp, &ex.features);
                for a in 0..num_arms {
                    let err = probs[a] - if a == ex.arm { 1.0 } else { 0.0 };
                    let scale = ex.weight * err / temp;
                    grad_b[a] += scale;
                    for (g, &x) in grad_w[a].iter_mut().zip(&ex.features) {
                        *g += scale * x;
                    }
                }
            }
            let step = lr / batch_weight;
            for a in 0..num_arms {
                bias[a] -= step * grad_b[a];
                for (w, g) in weights[a].iter_mut().zip(&grad_w[a]) {
                    *w -= step * g;
                }
            }
        }
    }

    Ok(TrainedOracle {
        expert: SoftmaxExpert::new(weights, bias, temp)?,
        degenerate: false,
    })
}

fn raw_softmax(weights: &[Vec<f64>], bias: &[f64], temp: f64, x: &[f64]) -> Vec<f64> {
    let mut scores: Vec<f64> = weights
        .iter()
        .zip(bias)
        .map(|(w, b)| (w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b) / temp)
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
    scores
}

/// Importance-weighted training examples from a sample log. Discrete
/// contexts are one-hot encoded with dimension `max id + 1` over the log.
pub fn examples_from_log(log: &SampleLog) -> Result<Vec<TrainingExample>> {
    let one_hot_dim = log
        .records()
        .iter()
        .filter_map(|r| match &r.context {
            ContextValue::Discrete(i) => Some(i + 1),
            ContextValue::Features(_) => None,
        })
        .max()
        .unwrap_or(0);
    log.records()
        .iter()
        .map(|rec| {
            let features = match &rec.context {
                ContextValue::Discrete(_) => rec.context.to_features(one_hot_dim),
                ContextValue::Features(x) => x.clone(),
            };
            Ok(TrainingExample {
                features,
                arm: rec.arm,
                weight: make_importance_weight(rec.reward, rec.behavior_prob)?,
            })
        })
        .collect()
}

/// Spawn `count` softmax experts from the log, each trained on a seeded
/// bootstrap resample of the importance-weighted data with mildly varied
/// hyperparameters. An empty log yields `count` uniform experts.
pub fn spawn_batch_experts(log: &SampleLog, count: usize, seed: u64) -> Result<Vec<TrainedOracle>> {
    let num_arms = log.num_arms();
    if log.is_empty() {
        return Ok((0..count)
            .map(|_| TrainedOracle {
                expert: SoftmaxExpert::uniform(num_arms),
                degenerate: true,
            })
            .collect());
    }
    let examples = examples_from_log(log)?;
    let resample_size = ((examples.len() as f64 * BOOTSTRAP_FRACTION).ceil() as usize).max(1);
    // Diversity comes from the bootstrap and from spreading learning rates;
    // small logs need the aggressive end of the grid to move at all.
    let lr_grid = [0.1, 1.0, 0.3, 0.6];
    let mut out = Vec::with_capacity(count);
    for e in 0..count {
        let expert_seed = derive_seed(seed, e as u64);
        let mut rng = derive_rng(expert_seed, crate::rng::STREAM_ORACLE);
        let resampled: Vec<TrainingExample> = (0..resample_size)
            .map(|_| examples[rng.random_range(0..examples.len())].clone())
            .collect();
        let hp = OracleHyperparams {
            learning_rate: lr_grid[e % lr_grid.len()],
            seed: expert_seed,
            ..OracleHyperparams::default()
        };
        out.push(train_oracle(&resampled, num_arms, &hp)?);
    }
    Ok(out)
}
