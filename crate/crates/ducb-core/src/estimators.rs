//! Importance-sampling mean estimators over the shared sample log.
//!
//! Every sample collected under any behavior expert estimates every target
//! expert's mean through the ratio `rho = pi_k(v|x) / pi_j(v|x)`. Two
//! estimators tame the heavy tail of that ratio:
//!
//! * the clipped estimator drops samples whose ratio exceeds
//!   `2 ln(2/eps) M_kj` and weights expert-j samples by `1/M_kj`, with the
//!   per-target `eps = beta_k(t)` solved online from
//!   `beta / ln(2/beta) = sqrt(c1 t ln t) / Z_k(t)`;
//! * the median-of-means estimator splits samples into `l(t)` groups that
//!   preserve per-expert fractions, averages each group with `1/sigma_kj`
//!   weights (no clipping), and takes the median of the group means.
//!
//! The `*_with` variants take a precomputed target-probability lookup so a
//! policy loop can reuse a per-expert cache; the plain variants evaluate the
//! target expert directly. Index functions never fail: rounds without usable
//! data yield the `+inf` sentinel index, which forces exploration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experts::{ContextValue, Expert};
use crate::stats::median_in_place;

/// One logged interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    /// Round the sample was collected in.
    pub round: u64,
    /// Behavior expert that produced the arm.
    pub expert: usize,
    pub context: ContextValue,
    pub arm: usize,
    /// Reward in [0, 1].
    pub reward: f64,
    /// Probability the behavior expert assigned to the chosen arm; positive.
    pub behavior_prob: f64,
}

/// Append-only log of samples shared by all estimators.
#[derive(Debug, Clone, Default)]
pub struct SampleLog {
    records: Vec<SampleRecord>,
    counts: Vec<u64>,
    num_arms: usize,
}

impl SampleLog {
    pub fn new(num_arms: usize) -> Self {
        SampleLog {
            records: Vec::new(),
            counts: Vec::new(),
            num_arms,
        }
    }

    pub fn push(&mut self, record: SampleRecord) -> Result<()> {
        if !(0.0..=1.0).contains(&record.reward) {
            return Err(Error::RewardRange {
                value: record.reward,
            });
        }
        if !record.behavior_prob.is_finite()
            || record.behavior_prob <= 0.0
            || record.behavior_prob > 1.0
        {
            return Err(Error::NonPositiveProbability {
                value: record.behavior_prob,
            });
        }
        if self.num_arms > 0 && record.arm >= self.num_arms {
            return Err(Error::ArmOutOfRange {
                arm: record.arm,
                num_arms: self.num_arms,
            });
        }
        if record.expert >= self.counts.len() {
            self.counts.resize(record.expert + 1, 0);
        }
        self.counts[record.expert] += 1;
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    /// Per-expert sample counts n_j(t); index j may exceed the highest expert
    /// seen, in which case the count is zero.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count_for(&self, expert: usize) -> u64 {
        self.counts.get(expert).copied().unwrap_or(0)
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    /// Contexts in arrival order (used to re-estimate divergences).
    pub fn contexts(&self) -> impl Iterator<Item = &ContextValue> {
        self.records.iter().map(|r| &r.context)
    }
}

/// Constants for the clipped estimator's confidence radius.
///
/// `c1` is 16 in the analysis and 1 in practice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClippedConfig {
    pub c1: f64,
    /// Tolerance for the beta root solve.
    pub beta_tol: f64,
}

impl ClippedConfig {
    pub fn analysis() -> Self {
        ClippedConfig {
            c1: 16.0,
            beta_tol: 1e-9,
        }
    }

    pub fn practice() -> Self {
        ClippedConfig {
            c1: 1.0,
            beta_tol: 1e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.c1.is_finite() || self.c1 <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "c1",
                value: self.c1,
            });
        }
        if !(self.beta_tol > 0.0 && self.beta_tol <= 1e-6) {
            return Err(Error::InvalidParameter {
                name: "beta_tol",
                value: self.beta_tol,
            });
        }
        Ok(())
    }
}

impl Default for ClippedConfig {
    fn default() -> Self {
        ClippedConfig::practice()
    }
}

/// Constants for the median-of-means estimator.
///
/// `c2` (group count scale) is 8 in the analysis, 4 in practice; `c3`
/// (radius scale) is 64 in the analysis, 2 in practice. The failure
/// probability is `delta(t) = t^(-delta_exponent)` with exponent 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoMConfig {
    pub c2: f64,
    pub c3: f64,
    pub delta_exponent: u32,
}

impl MoMConfig {
    pub fn analysis() -> Self {
        MoMConfig {
            c2: 8.0,
            c3: 64.0,
            delta_exponent: 2,
        }
    }

    pub fn practice() -> Self {
        MoMConfig {
            c2: 4.0,
            c3: 2.0,
            delta_exponent: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c2", self.c2), ("c3", self.c3)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParameter { name, value: v });
            }
        }
        if self.delta_exponent == 0 {
            return Err(Error::InvalidParameter {
                name: "delta_exponent",
                value: 0.0,
            });
        }
        Ok(())
    }

    /// `ln(1/delta(t))` with `delta(t) = t^(-delta_exponent)`.
    pub fn log_one_over_delta(&self, t: u64) -> f64 {
        self.delta_exponent as f64 * (t as f64).ln()
    }
}

impl Default for MoMConfig {
    fn default() -> Self {
        MoMConfig::practice()
    }
}

/// An expert's index: mean estimate plus confidence radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpertIndex {
    pub estimate: f64,
    pub radius: f64,
}

impl ExpertIndex {
    /// Upper confidence bound `U_k = estimate + radius`.
    pub fn ucb(&self) -> f64 {
        self.estimate + self.radius
    }

    /// Sentinel for experts without usable data; its infinite ucb forces the
    /// policy to gather data before comparisons matter.
    pub fn insufficient_data() -> Self {
        ExpertIndex {
            estimate: 0.0,
            radius: f64::INFINITY,
        }
    }

    pub fn is_sentinel(&self) -> bool {
        self.radius.is_infinite()
    }
}

/// Target-probability lookup for a sample: `pi_k(v_s | x_s)` by sample index.
pub trait TargetProbs {
    fn target_prob(&self, sample: usize, record: &SampleRecord) -> Result<f64>;
}

impl TargetProbs for Expert {
    fn target_prob(&self, _sample: usize, record: &SampleRecord) -> Result<f64> {
        self.prob(&record.context, record.arm)
    }
}

/// Precomputed probability column (one entry per sample).
impl TargetProbs for &[f64] {
    fn target_prob(&self, sample: usize, _record: &SampleRecord) -> Result<f64> {
        Ok(self[sample])
    }
}

/// Effective sample weight `Z_k(t) = sum_j n_j(t) / M_kj`.
///
/// Samples from experts with unbounded divergence contribute nothing; if no
/// expert contributes, the bounded-divergence assumption is violated and an
/// error is surfaced.
pub fn z_weight(log: &SampleLog, m_row: &[f64]) -> Result<f64> {
    if log.is_empty() {
        return Err(Error::InsufficientData("empty sample log"));
    }
    validate_row(m_row, log, "m_row")?;
    let mut z = 0.0;
    for (j, &n) in log.counts().iter().enumerate() {
        if n > 0 {
            z += n as f64 / m_row[j];
        }
    }
    if z <= 0.0 {
        return Err(Error::UnboundedDivergence);
    }
    Ok(z)
}

fn validate_row(row: &[f64], log: &SampleLog, what: &'static str) -> Result<()> {
    if row.len() < log.counts().len() {
        return Err(Error::DimensionMismatch {
            what: "divergence row",
            expected: log.counts().len(),
            found: row.len(),
        });
    }
    for &v in row {
        if v.is_nan() || v < 1.0 {
            return Err(Error::Malformed {
                what,
                detail: format!("entry {v} must be >= 1"),
            });
        }
    }
    Ok(())
}

/// Solve `beta / ln(2/beta) = target` for `beta` in `(0, 2)` by bisection.
///
/// The left side is strictly increasing on `(0, 2)` with range `(0, inf)`,
/// so the root exists and is unique for every positive target; target zero
/// maps to beta zero.
pub fn solve_beta(target: f64, tol: f64) -> Result<f64> {
    if !target.is_finite() || target < 0.0 {
        return Err(Error::InvalidParameter {
            name: "beta target",
            value: target,
        });
    }
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "beta tolerance",
            value: tol,
        });
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    let g = |beta: f64| beta / (2.0 / beta).ln();
    let mut lo = 0.0f64;
    let mut hi = 2.0 - 1e-12;
    let mut mid = 1.0;
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let val = g(mid);
        if (val - target).abs() <= tol {
            return Ok(mid);
        }
        if val < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// Clip level `2 ln(2/eps) M`; infinite for `eps = 0` (no clipping).
pub fn clip_level(epsilon: f64, m: f64) -> f64 {
    if epsilon <= 0.0 {
        f64::INFINITY
    } else {
        2.0 * (2.0 / epsilon).ln() * m
    }
}

fn clipped_sum<P: TargetProbs>(
    log: &SampleLog,
    target: &P,
    m_row: &[f64],
    epsilon: f64,
) -> Result<f64> {
    // Per-pair clip levels share the factor 2 ln(2/eps); compare rho/M to it.
    let base = if epsilon <= 0.0 {
        f64::INFINITY
    } else {
        2.0 * (2.0 / epsilon).ln()
    };
    let mut sum = 0.0;
    for (s, rec) in log.records().iter().enumerate() {
        let m = m_row[rec.expert];
        if !m.is_finite() {
            continue; // weight 1/M vanishes
        }
        let rho = target.target_prob(s, rec)? / rec.behavior_prob;
        if rho <= base * m {
            sum += rec.reward * rho / m;
        }
    }
    Ok(sum)
}

/// Clipped importance-sampling estimate of expert `k`'s mean.
///
/// `(1/Z_k) sum_j sum_{s in T_j} (1/M_kj) y_s rho_s 1{rho_s <= 2 ln(2/eps) M_kj}`.
/// Over-threshold samples are dropped entirely, and `Z_k` keeps the full
/// counts regardless of how many samples the indicator removes.
pub fn clipped_estimate(
    log: &SampleLog,
    target: &Expert,
    m_row: &[f64],
    epsilon: f64,
) -> Result<f64> {
    clipped_estimate_with(log, target, m_row, epsilon)
}

/// [`clipped_estimate`] with an arbitrary target-probability source.
pub fn clipped_estimate_with<P: TargetProbs>(
    log: &SampleLog,
    target: &P,
    m_row: &[f64],
    epsilon: f64,
) -> Result<f64> {
    if !(0.0..2.0).contains(&epsilon) {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            value: epsilon,
        });
    }
    let z = z_weight(log, m_row)?;
    Ok(clipped_sum(log, target, m_row, epsilon)? / z)
}

/// Index (estimate + radius) for the clipped estimator at time `t`.
///
/// Solves `beta_k / ln(2/beta_k) = sqrt(c1 t ln t) / Z_k(t)`, then uses
/// `eps = beta_k` as the clip parameter and `radius = (3/2) beta_k`.
/// Insufficient data yields the `+inf` sentinel.
pub fn clipped_index(
    log: &SampleLog,
    target: &Expert,
    m_row: &[f64],
    t: u64,
    cfg: &ClippedConfig,
) -> Result<ExpertIndex> {
    clipped_index_with(log, target, m_row, t, cfg)
}

/// [`clipped_index`] with an arbitrary target-probability source.
pub fn clipped_index_with<P: TargetProbs>(
    log: &SampleLog,
    target: &P,
    m_row: &[f64],
    t: u64,
    cfg: &ClippedConfig,
) -> Result<ExpertIndex> {
    cfg.validate()?;
    if t == 0 {
        return Ok(ExpertIndex::insufficient_data());
    }
    let z = match z_weight(log, m_row) {
        Ok(z) => z,
        Err(Error::InsufficientData(_)) | Err(Error::UnboundedDivergence) => {
            return Ok(ExpertIndex::insufficient_data())
        }
        Err(e) => return Err(e),
    };
    let tf = t as f64;
    let target_value = (cfg.c1 * tf * tf.ln()).sqrt() / z;
    let beta = solve_beta(target_value, cfg.beta_tol)?;
    let estimate = clipped_sum(log, target, m_row, beta)? / z;
    Ok(ExpertIndex {
        estimate,
        radius: 1.5 * beta,
    })
}

/// Deterministic round-robin partition preserving per-expert fractions: the
/// r-th sample (in arrival order) from expert j goes to group `r mod G`.
/// Every sample lands in exactly one group; groups may be empty.
pub fn partition_groups(log: &SampleLog, num_groups: usize) -> Vec<Vec<usize>> {
    let g = num_groups.max(1);
    let mut groups = vec![Vec::new(); g];
    let mut seen = vec![0usize; log.counts().len()];
    for (s, rec) in log.records().iter().enumerate() {
        let r = seen[rec.expert] % g;
        seen[rec.expert] += 1;
        groups[r].push(s);
    }
    groups
}

/// Number of groups `l(t) = floor(c2 ln(1/delta(t)))`, clamped to
/// `[1, total samples]`.
pub fn num_groups_at(t: u64, cfg: &MoMConfig, total_samples: usize) -> usize {
    let raw = (cfg.c2 * cfg.log_one_over_delta(t)).floor();
    let l = if raw.is_finite() && raw >= 1.0 {
        raw as usize
    } else {
        1
    };
    l.clamp(1, total_samples.max(1))
}

/// Weighted importance-sampled mean of one group for target `k`:
/// `(1/W_k(r,t)) sum (1/sigma_kj) y rho` with `W_k(r,t) = sum_i n_i(r,t)/sigma_ki`.
/// No clipping anywhere. Empty groups are an error (callers exclude them).
pub fn group_mean(
    log: &SampleLog,
    group: &[usize],
    target: &Expert,
    sigma_row: &[f64],
) -> Result<f64> {
    group_mean_with(log, group, target, sigma_row)
}

/// [`group_mean`] with an arbitrary target-probability source.
pub fn group_mean_with<P: TargetProbs>(
    log: &SampleLog,
    group: &[usize],
    target: &P,
    sigma_row: &[f64],
) -> Result<f64> {
    if group.is_empty() {
        return Err(Error::InsufficientData("empty group"));
    }
    validate_row(sigma_row, log, "sigma_row")?;
    let mut w = 0.0;
    let mut sum = 0.0;
    for &s in group {
        let rec = &log.records()[s];
        let sigma = sigma_row[rec.expert];
        w += 1.0 / sigma;
        let rho = target.target_prob(s, rec)? / rec.behavior_prob;
        sum += rec.reward * rho / sigma;
    }
    // Every member can carry zero weight when its behavior expert's
    // divergence is unbounded; such a group holds no usable information.
    if w == 0.0 {
        return Err(Error::InsufficientData("group has no weighted samples"));
    }
    Ok(sum / w)
}

struct GroupStats {
    means: Vec<f64>,
    /// min over nonempty groups of W_k(r,t)/n(r,t)
    min_w_per_sample: f64,
}

fn mom_group_stats<P: TargetProbs>(
    log: &SampleLog,
    target: &P,
    sigma_row: &[f64],
    num_groups: usize,
) -> Result<GroupStats> {
    let groups = partition_groups(log, num_groups);
    let mut means = Vec::with_capacity(groups.len());
    let mut min_w_per_sample = f64::INFINITY;
    for group in &groups {
        if group.is_empty() {
            continue;
        }
        let mut w = 0.0;
        let mut sum = 0.0;
        for &s in group {
            let rec = &log.records()[s];
            let sigma = sigma_row[rec.expert];
            w += 1.0 / sigma;
            let rho = target.target_prob(s, rec)? / rec.behavior_prob;
            sum += rec.reward * rho / sigma;
        }
        // Zero-weight groups (all members from unbounded-divergence experts)
        // carry no information; exclude them like empty ones.
        if w == 0.0 {
            continue;
        }
        means.push(sum / w);
        min_w_per_sample = min_w_per_sample.min(w / group.len() as f64);
    }
    Ok(GroupStats {
        means,
        min_w_per_sample,
    })
}

/// Median-of-means estimate of expert `k`'s mean at time `t`.
pub fn mom_estimate(
    log: &SampleLog,
    target: &Expert,
    sigma_row: &[f64],
    t: u64,
    cfg: &MoMConfig,
) -> Result<f64> {
    mom_estimate_with(log, target, sigma_row, t, cfg)
}

/// [`mom_estimate`] with an arbitrary target-probability source.
pub fn mom_estimate_with<P: TargetProbs>(
    log: &SampleLog,
    target: &P,
    sigma_row: &[f64],
    t: u64,
    cfg: &MoMConfig,
) -> Result<f64> {
    cfg.validate()?;
    if log.is_empty() {
        return Err(Error::InsufficientData("empty sample log"));
    }
    validate_row(sigma_row, log, "sigma_row")?;
    let l = num_groups_at(t, cfg, log.len());
    let mut stats = mom_group_stats(log, target, sigma_row, l)?;
    if stats.means.is_empty() {
        return Err(Error::InsufficientData("all groups empty"));
    }
    Ok(median_in_place(&mut stats.means))
}

/// Index (estimate + radius) for the median-of-means estimator at time `t`:
/// `radius = (1/W_k(t)) sqrt(c3 ln(1/delta(t)) / t)` with
/// `W_k(t) = min_r W_k(r,t)/n(r,t)` over nonempty groups.
pub fn mom_index(
    log: &SampleLog,
    target: &Expert,
    sigma_row: &[f64],
    t: u64,
    cfg: &MoMConfig,
) -> Result<ExpertIndex> {
    mom_index_with(log, target, sigma_row, t, cfg)
}

/// [`mom_index`] with an arbitrary target-probability source.
pub fn mom_index_with<P: TargetProbs>(
    log: &SampleLog,
    target: &P,
    sigma_row: &[f64],
    t: u64,
    cfg: &MoMConfig,
) -> Result<ExpertIndex> {
    cfg.validate()?;
    if t == 0 || log.is_empty() {
        return Ok(ExpertIndex::insufficient_data());
    }
    validate_row(sigma_row, log, "sigma_row")?;
    let l = num_groups_at(t, cfg, log.len());
    let mut stats = mom_group_stats(log, target, sigma_row, l)?;
    if stats.means.is_empty() {
        return Ok(ExpertIndex::insufficient_data());
    }
    let estimate = median_in_place(&mut stats.means);
    let tf = t as f64;
    let radius = (cfg.c3 * cfg.log_one_over_delta(t) / tf).sqrt() / stats.min_w_per_sample;
    Ok(ExpertIndex { estimate, radius })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experts::TabularExpert;
    use approx::assert_abs_diff_eq;

    fn point_expert(k: usize, arms: usize) -> Expert {
        let mut row = vec![0.0; arms];
        row[k] = 1.0;
        Expert::Tabular(TabularExpert::new(vec![row]).unwrap())
    }

    /// Log where ratios are fully controlled: the target expert below puts
    /// probability one on arm 0 in the single context, so the ratio of a
    /// sample with behavior probability p is exactly 1/p.
    fn log_with(records: &[(usize, f64, f64)]) -> SampleLog {
        // (expert, reward, behavior_prob); all on arm 0, context 0.
        let mut log = SampleLog::new(2);
        for (i, &(expert, reward, bp)) in records.iter().enumerate() {
            log.push(SampleRecord {
                round: i as u64 + 1,
                expert,
                context: ContextValue::Discrete(0),
                arm: 0,
                reward,
                behavior_prob: bp,
            })
            .unwrap();
        }
        log
    }

    #[test]
    fn z_weight_examples() {
        let log = log_with(&[(0, 1.0, 1.0), (0, 0.0, 1.0), (0, 1.0, 1.0)]);
        assert_eq!(z_weight(&log, &[1.0]).unwrap(), 3.0);

        let log = log_with(&[
            (0, 1.0, 1.0),
            (0, 1.0, 1.0),
            (1, 1.0, 1.0),
            (1, 1.0, 1.0),
            (1, 1.0, 1.0),
            (1, 1.0, 1.0),
        ]);
        assert_eq!(z_weight(&log, &[1.0, 2.0]).unwrap(), 4.0);

        let empty = SampleLog::new(2);
        assert!(matches!(
            z_weight(&empty, &[1.0]),
            Err(Error::InsufficientData(_))
        ));

        let log = log_with(&[(0, 1.0, 1.0)]);
        assert!(matches!(
            z_weight(&log, &[f64::INFINITY]),
            Err(Error::UnboundedDivergence)
        ));
    }

    #[test]
    fn solve_beta_limit_and_oracle_targets() {
        assert_eq!(solve_beta(0.0, 1e-10).unwrap(), 0.0);

        let g = |beta: f64| beta / (2.0 / beta).ln();
        let b1 = solve_beta(1.0, 1e-10).unwrap();
        assert_abs_diff_eq!(g(b1), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(b1, 0.8526, epsilon = 1e-3);

        let b10 = solve_beta(10.0, 1e-8).unwrap();
        assert_abs_diff_eq!(g(b10), 10.0, epsilon = 1e-8);
        assert!(b10 > 1.0 && b10 < 2.0, "beta={b10}");

        assert!(solve_beta(-1.0, 1e-8).is_err());
    }

    #[test]
    fn solve_beta_roundtrips_random_targets() {
        use rand::Rng;
        let mut rng = crate::rng::derive_rng(17, 0);
        let g = |beta: f64| beta / (2.0 / beta).ln();
        for _ in 0..100 {
            let target: f64 = rng.random_range(1e-6..50.0);
            let beta = solve_beta(target, 1e-10).unwrap();
            assert!(beta > 0.0 && beta < 2.0);
            assert_abs_diff_eq!(g(beta), target, epsilon = 1e-10);
        }
    }

    #[test]
    fn self_estimation_reduces_to_sample_mean() {
        // rho = 1 everywhere, M = 1, eps = 0.5 (clip level ~2.77).
        let log = log_with(&[(0, 1.0, 1.0), (0, 0.0, 1.0), (0, 1.0, 1.0)]);
        let target = point_expert(0, 2);
        let est = clipped_estimate(&log, &target, &[1.0], 0.5).unwrap();
        assert_abs_diff_eq!(est, 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn over_threshold_sample_is_dropped_not_capped() {
        // Single sample with rho = 3 exceeds the level 2 ln 4 ~ 2.77, so the
        // estimate is zero, and the normalizer keeps the full count.
        let log = log_with(&[(0, 1.0, 1.0 / 3.0)]);
        let target = point_expert(0, 2);
        let est = clipped_estimate(&log, &target, &[1.0], 0.5).unwrap();
        assert_eq!(est, 0.0);
    }

    #[test]
    fn two_behavior_experts_weighted_average() {
        // n = (1, 1), M_k. = (1, 2), rho = 1, Y = 1, generous level:
        // (1/1 + 1/2) / (1/1 + 1/2) = 1.
        let log = log_with(&[(0, 1.0, 1.0), (1, 1.0, 1.0)]);
        let target = point_expert(0, 2);
        let est = clipped_estimate(&log, &target, &[1.0, 2.0], 1.0).unwrap();
        assert_abs_diff_eq!(est, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn clipped_estimate_monotone_in_clip_level() {
        let log = log_with(&[(0, 1.0, 0.2), (0, 1.0, 0.5), (1, 1.0, 0.1), (1, 0.0, 0.9)]);
        let target = point_expert(0, 2);
        let m_row = [1.3, 1.7];
        // Larger eps -> smaller level -> fewer samples -> smaller estimate.
        let mut last = f64::INFINITY;
        for eps in [0.01, 0.3, 0.9, 1.5, 1.9] {
            let est = clipped_estimate(&log, &target, &m_row, eps).unwrap();
            assert!(est <= last + 1e-15, "estimate not monotone at eps={eps}");
            last = est;
        }
    }

    #[test]
    fn clipped_estimate_respects_upper_bound() {
        let log = log_with(&[(0, 1.0, 0.05), (0, 1.0, 0.4), (1, 1.0, 0.25)]);
        let target = point_expert(0, 2);
        let m_row = [1.2, 2.0];
        for eps in [0.1, 0.5, 1.0] {
            let est = clipped_estimate(&log, &target, &m_row, eps).unwrap();
            let z = z_weight(&log, &m_row).unwrap();
            let bound = 2.0 * (2.0 / eps).ln() * log.len() as f64 / z;
            assert!(est >= 0.0 && est <= bound + 1e-12);
        }
    }

    #[test]
    fn clipped_index_sentinel_without_data() {
        let empty = SampleLog::new(2);
        let idx = clipped_index(
            &empty,
            &point_expert(0, 2),
            &[1.0],
            2,
            &ClippedConfig::practice(),
        )
        .unwrap();
        assert!(idx.is_sentinel());
        assert_eq!(idx.ucb(), f64::INFINITY);
    }

    #[test]
    fn clipped_radius_shrinks_over_time() {
        // With Z_k(t) = t (self-estimation, M = 1) the beta target is
        // sqrt(c1 ln t / t), so beta decreases over the probed horizon.
        let cfg = ClippedConfig::practice();
        let target = point_expert(0, 2);
        let mut radii = Vec::new();
        for t in [10u64, 100, 1000] {
            let recs: Vec<(usize, f64, f64)> = (0..t).map(|_| (0usize, 1.0, 1.0)).collect();
            let log = log_with(&recs);
            let idx = clipped_index(&log, &target, &[1.0], t, &cfg).unwrap();
            radii.push(idx.radius);
        }
        assert!(radii[0] > radii[1] && radii[1] > radii[2], "{radii:?}");
    }

    #[test]
    fn partition_examples() {
        let log = log_with(&[(0, 1.0, 1.0); 6]);
        let groups = partition_groups(&log, 3);
        assert_eq!(
            groups.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![2, 2, 2]
        );

        // n = (5, 3), 2 groups: expert 0 splits (3, 2), expert 1 splits (2, 1).
        let mut recs = vec![(0usize, 1.0, 1.0); 5];
        recs.extend([(1usize, 1.0, 1.0); 3]);
        let log = log_with(&recs);
        let groups = partition_groups(&log, 2);
        let count =
            |g: &[usize], e: usize| g.iter().filter(|&&s| log.records()[s].expert == e).count();
        assert_eq!(count(&groups[0], 0), 3);
        assert_eq!(count(&groups[1], 0), 2);
        assert_eq!(count(&groups[0], 1), 2);
        assert_eq!(count(&groups[1], 1), 1);

        let one = partition_groups(&log, 1);
        assert_eq!(one[0].len(), 8);
    }

    #[test]
    fn partition_is_a_partition() {
        use rand::Rng;
        let mut rng = crate::rng::derive_rng(23, 1);
        let recs: Vec<(usize, f64, f64)> = (0..97)
            .map(|_| (rng.random_range(0..3), 1.0, 1.0))
            .collect();
        let mut log = SampleLog::new(2);
        for (i, &(e, y, p)) in recs.iter().enumerate() {
            log.push(SampleRecord {
                round: i as u64,
                expert: e,
                context: ContextValue::Discrete(0),
                arm: 0,
                reward: y,
                behavior_prob: p,
            })
            .unwrap();
        }
        for g in [1usize, 2, 5, 13] {
            let groups = partition_groups(&log, g);
            let mut seen = vec![false; log.len()];
            for group in &groups {
                for &s in group {
                    assert!(!seen[s], "sample {s} in two groups");
                    seen[s] = true;
                }
            }
            assert!(seen.iter().all(|&b| b), "sample missing from partition");
        }
    }

    #[test]
    fn group_mean_examples() {
        // Self-estimation, sigma = 1, Y = (1, 0) -> 0.5.
        let log = log_with(&[(0, 1.0, 1.0), (0, 0.0, 1.0)]);
        let target = point_expert(0, 2);
        let m = group_mean(&log, &[0, 1], &target, &[1.0]).unwrap();
        assert_abs_diff_eq!(m, 0.5, epsilon = 1e-15);

        // One sample, Y = 1, rho = 2, sigma = 2 -> 2.0.
        let log = log_with(&[(0, 1.0, 0.5)]);
        let m = group_mean(&log, &[0], &target, &[2.0]).unwrap();
        assert_abs_diff_eq!(m, 2.0, epsilon = 1e-15);

        // All rewards zero -> 0.
        let log = log_with(&[(0, 0.0, 0.5), (0, 0.0, 0.25)]);
        let m = group_mean(&log, &[0, 1], &target, &[1.5]).unwrap();
        assert_eq!(m, 0.0);

        assert!(group_mean(&log, &[], &target, &[1.0]).is_err());
    }

    #[test]
    fn mom_single_group_is_plain_weighted_mean() {
        let log = log_with(&[(0, 1.0, 1.0), (0, 0.0, 1.0), (0, 1.0, 1.0)]);
        let target = point_expert(0, 2);
        // t = 1 forces l = 1.
        let est = mom_estimate(&log, &target, &[1.0], 1, &MoMConfig::practice()).unwrap();
        let plain = group_mean(&log, &[0, 1, 2], &target, &[1.0]).unwrap();
        assert_abs_diff_eq!(est, plain, epsilon = 1e-15);
    }

    #[test]
    fn median_conventions_in_mom() {
        let mut odd = vec![0.2, 0.5, 0.9];
        assert_eq!(median_in_place(&mut odd), 0.5);
        let mut even = vec![0.2, 0.4, 0.6, 0.8];
        assert_eq!(median_in_place(&mut even), 0.5);
    }

    #[test]
    fn mom_radius_formula_with_unit_sigma() {
        // All sigma = 1 -> W_k(t) = 1, radius = sqrt(c3 * 2 ln t / t).
        let t = 64u64;
        let recs: Vec<(usize, f64, f64)> = (0..t).map(|_| (0usize, 1.0, 1.0)).collect();
        let log = log_with(&recs);
        let cfg = MoMConfig::practice();
        let idx = mom_index(&log, &point_expert(0, 2), &[1.0], t, &cfg).unwrap();
        let expected = (cfg.c3 * 2.0 * (t as f64).ln() / t as f64).sqrt();
        assert_abs_diff_eq!(idx.radius, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(idx.ucb(), idx.estimate + idx.radius, epsilon = 0.0);
    }

    #[test]
    fn mom_radius_scales_with_sigma() {
        // sigma_k. identically sigma -> radius = sigma sqrt(c3 * 2 ln t / t).
        let t = 50u64;
        let sigma = 1.7;
        let recs: Vec<(usize, f64, f64)> = (0..t).map(|_| (0usize, 1.0, 1.0)).collect();
        let log = log_with(&recs);
        let cfg = MoMConfig::practice();
        let idx = mom_index(&log, &point_expert(0, 2), &[sigma], t, &cfg).unwrap();
        let expected = sigma * (cfg.c3 * 2.0 * (t as f64).ln() / t as f64).sqrt();
        assert_abs_diff_eq!(idx.radius, expected, epsilon = 1e-12);
    }

    #[test]
    fn mom_index_sentinel_without_data() {
        let empty = SampleLog::new(2);
        let idx = mom_index(
            &empty,
            &point_expert(0, 2),
            &[1.0],
            5,
            &MoMConfig::practice(),
        )
        .unwrap();
        assert!(idx.is_sentinel());
    }

    #[test]
    fn unbounded_sigma_rows_never_produce_nan() {
        let log = log_with(&[(0, 1.0, 0.5), (1, 0.0, 0.5), (0, 1.0, 0.25)]);
        let target = point_expert(0, 2);
        let cfg = MoMConfig::practice();

        // One bounded behavior expert keeps the estimator usable.
        let partial = [f64::INFINITY, 1.5];
        let idx = mom_index(&log, &target, &partial, 3, &cfg).unwrap();
        assert!(idx.estimate.is_finite() && idx.radius.is_finite());

        // All pairs unbounded: no information at all, sentinel index.
        let all_inf = [f64::INFINITY, f64::INFINITY];
        let idx = mom_index(&log, &target, &all_inf, 3, &cfg).unwrap();
        assert!(idx.is_sentinel());
        assert!(mom_estimate(&log, &target, &all_inf, 3, &cfg).is_err());
        assert!(group_mean(&log, &[0, 1, 2], &target, &all_inf).is_err());
    }

    #[test]
    fn log_rejects_invalid_records() {
        let mut log = SampleLog::new(2);
        let rec = |reward: f64, bp: f64, arm: usize| SampleRecord {
            round: 0,
            expert: 0,
            context: ContextValue::Discrete(0),
            arm,
            reward,
            behavior_prob: bp,
        };
        assert!(log.push(rec(1.5, 0.5, 0)).is_err());
        assert!(log.push(rec(0.5, 0.0, 0)).is_err());
        assert!(log.push(rec(0.5, 0.5, 2)).is_err());
        assert!(log.push(rec(1.0, 0.5, 1)).is_ok());
        assert_eq!(log.count_for(0), 1);
    }
}
