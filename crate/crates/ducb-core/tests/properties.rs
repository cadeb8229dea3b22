//! Property tests for the statistical invariants.

use proptest::prelude::*;

use ducb_core::divergence::{conditional_f_divergence, f1, f2};
use ducb_core::estimators::{clipped_estimate, partition_groups, solve_beta, z_weight};
use ducb_core::harness::{lambda_mu, GapProfile};
use ducb_core::{
    ContextValue, Expert, MoMConfig, SampleLog, SampleRecord, SoftmaxExpert, TabularEnvironment,
    TabularExpert,
};

fn prob_row(k: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.02f64..1.0, k).prop_map(|mut row| {
        let sum: f64 = row.iter().sum();
        for p in row.iter_mut() {
            *p /= sum;
        }
        let tail: f64 = row.iter().skip(1).sum();
        row[0] = 1.0 - tail;
        row
    })
}

fn sample_log(max_len: usize) -> impl Strategy<Value = SampleLog> {
    proptest::collection::vec(
        (0usize..3, 0usize..2, 0usize..2, 0.0f64..=1.0, 0.05f64..=1.0),
        1..max_len,
    )
    .prop_map(|entries| {
        let mut log = SampleLog::new(2);
        for (i, (expert, ctx, arm, reward, bprob)) in entries.into_iter().enumerate() {
            log.push(SampleRecord {
                round: i as u64 + 1,
                expert,
                context: ContextValue::Discrete(ctx),
                arm,
                reward,
                behavior_prob: bprob,
            })
            .unwrap();
        }
        log
    })
}

proptest! {
    #[test]
    fn softmax_evaluate_is_probability_vector(
        weights in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 2..5),
        bias in proptest::collection::vec(-2.0f64..2.0, 5),
        temperature in 0.2f64..4.0,
        x in proptest::collection::vec(-3.0f64..3.0, 3),
    ) {
        let k = weights.len();
        let expert = Expert::Softmax(
            SoftmaxExpert::new(weights, bias[..k].to_vec(), temperature).unwrap(),
        );
        let dist = expert.evaluate(&ContextValue::Features(x)).unwrap();
        let sum: f64 = dist.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(dist.iter().all(|&p| p >= ducb_core::experts::PROB_FLOOR));
    }

    #[test]
    fn true_expert_mean_in_unit_interval(
        probs in prob_row(3),
        means in proptest::collection::vec(0.0f64..=1.0, 3),
    ) {
        let env = TabularEnvironment::new(vec![1.0], vec![means], 0).unwrap();
        let expert = Expert::Tabular(TabularExpert::new(vec![probs]).unwrap());
        let mu = env.true_expert_mean(&expert).unwrap();
        prop_assert!((0.0..=1.0).contains(&mu));
    }

    #[test]
    fn partition_assigns_every_sample_once(log in sample_log(64), groups in 1usize..9) {
        let partition = partition_groups(&log, groups);
        let mut seen = vec![0u32; log.len()];
        for group in &partition {
            for &s in group {
                seen[s] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        // Per-expert round-robin leaves group loads within one sample.
        for j in 0..log.counts().len() {
            let loads: Vec<usize> = partition
                .iter()
                .map(|g| g.iter().filter(|&&s| log.records()[s].expert == j).count())
                .collect();
            let min = loads.iter().min().unwrap();
            let max = loads.iter().max().unwrap();
            prop_assert!(max - min <= 1);
        }
    }

    #[test]
    fn clipped_estimate_bounded_and_monotone_in_level(
        log in sample_log(32),
        target_row in prob_row(2),
        eps_lo in 0.05f64..1.0,
        eps_hi in 1.0f64..1.9,
    ) {
        let target = Expert::Tabular(TabularExpert::new(vec![target_row; 2]).unwrap());
        let m_row = [1.4, 1.1, 2.3];
        // eps_hi gives the smaller clip level, so its estimate cannot exceed
        // the eps_lo one.
        let hi_level = clipped_estimate(&log, &target, &m_row, eps_lo).unwrap();
        let lo_level = clipped_estimate(&log, &target, &m_row, eps_hi).unwrap();
        prop_assert!(lo_level <= hi_level + 1e-12);
        for (eps, est) in [(eps_lo, hi_level), (eps_hi, lo_level)] {
            let z = z_weight(&log, &m_row).unwrap();
            let cap = 2.0 * (2.0 / eps).ln() * log.len() as f64 / z;
            prop_assert!(est >= 0.0 && est <= cap + 1e-12);
        }
    }

    #[test]
    fn solve_beta_inverts_its_equation(target in 1e-6f64..50.0) {
        let beta = solve_beta(target, 1e-10).unwrap();
        prop_assert!(beta > 0.0 && beta < 2.0);
        let g = beta / (2.0 / beta).ln();
        prop_assert!((g - target).abs() <= 1e-10);
    }

    #[test]
    fn divergences_are_nonnegative_and_measures_at_least_one(
        p in prob_row(3),
        q in prob_row(3),
        w in 0.05f64..0.95,
    ) {
        let rows_p = vec![p.clone(), q.clone()];
        let rows_q = vec![q.clone(), p.clone()];
        let weights = vec![w, 1.0 - w];
        for f in [f1 as fn(f64) -> f64, f2 as fn(f64) -> f64] {
            let d = conditional_f_divergence(&rows_p, &rows_q, &weights, f).unwrap();
            prop_assert!(d >= -1e-12);
        }
        let m = ducb_core::divergence::m_divergence(&rows_p, &rows_q, &weights).unwrap();
        let s = ducb_core::divergence::sigma_divergence(&rows_p, &rows_q, &weights).unwrap();
        prop_assert!(m >= 1.0);
        prop_assert!(s >= 1.0);
    }

    #[test]
    fn lambda_range_over_random_profiles(
        raw in proptest::collection::vec(0.01f64..=1.0, 1..30),
    ) {
        let mut gaps = vec![0.0];
        gaps.extend(raw);
        let profile = GapProfile::from_unsorted(gaps).unwrap();
        let n = profile.num_experts() as f64;
        let lambda = lambda_mu(&profile).unwrap();
        prop_assert!(lambda >= 1.0 - 1e-12);
        prop_assert!(lambda <= (n - 1.0).max(1.0) + 1e-12);
    }

    #[test]
    fn mom_estimate_lies_between_extreme_group_means(
        log in sample_log(48),
        target_row in prob_row(2),
        t in 1u64..64,
    ) {
        use ducb_core::estimators::{group_mean, mom_estimate, num_groups_at};
        let target = Expert::Tabular(TabularExpert::new(vec![target_row; 2]).unwrap());
        let sigma_row = [1.0, 1.5, 1.2];
        let cfg = MoMConfig::practice();
        let est = mom_estimate(&log, &target, &sigma_row, t, &cfg).unwrap();
        let l = num_groups_at(t, &cfg, log.len());
        let means: Vec<f64> = partition_groups(&log, l)
            .iter()
            .filter(|g| !g.is_empty())
            .map(|g| group_mean(&log, g, &target, &sigma_row).unwrap())
            .collect();
        let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(est >= lo - 1e-12 && est <= hi + 1e-12);
    }
}
