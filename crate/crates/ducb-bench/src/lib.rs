//! Shared fixtures for the criterion benches.

use rand::Rng;

use ducb_core::rng::derive_rng;
use ducb_core::{ContextValue, Expert, SampleLog, SampleRecord, TabularExpert};

/// Random tabular expert over `contexts` x `arms` with mass bounded away
/// from zero.
pub fn random_expert(contexts: usize, arms: usize, seed: u64) -> Expert {
    let mut rng = derive_rng(seed, 0xB0);
    let rows: Vec<Vec<f64>> = (0..contexts)
        .map(|_| {
            let mut row: Vec<f64> = (0..arms).map(|_| rng.random_range(0.1..1.0)).collect();
            let sum: f64 = row.iter().sum();
            for p in row.iter_mut() {
                *p /= sum;
            }
            let tail: f64 = row.iter().skip(1).sum();
            row[0] = 1.0 - tail;
            row
        })
        .collect();
    Expert::Tabular(TabularExpert::new(rows).unwrap())
}

/// Sample log of `len` records spread over `num_experts` behavior experts.
pub fn random_log(
    len: usize,
    num_experts: usize,
    contexts: usize,
    arms: usize,
    seed: u64,
) -> SampleLog {
    let mut rng = derive_rng(seed, 0xB1);
    let mut log = SampleLog::new(arms);
    for s in 0..len {
        log.push(SampleRecord {
            round: s as u64 + 1,
            expert: s % num_experts,
            context: ContextValue::Discrete(rng.random_range(0..contexts)),
            arm: rng.random_range(0..arms),
            reward: if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 },
            behavior_prob: rng.random_range(0.1..=1.0),
        })
        .unwrap();
    }
    log
}
