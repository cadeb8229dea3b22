//! Conditional f-divergences between stochastic experts.
//!
//! Two measures drive the estimators: the log-divergence
//! `M_ij = 1 + ln(1 + D_f1(pi_i || pi_j))` with generator
//! `f1(x) = x e^(x-1) - 1`, and the chi-square term
//! `sigma_ij = sqrt(1 + D_f2(pi_i || pi_j))` with `f2(x) = x^2 - 1`.
//! Both are computed exactly on tabular instances and estimated from
//! observed contexts with a median-of-means over per-context values.
//!
//! `f1` blows past f64 range for ratios around 700; we evaluate it as
//! `exp(ln x + x - 1) - 1` and report the pair as unbounded (`+inf`)
//! beyond the guard instead of silently saturating.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experts::{ContextValue, Expert};
use crate::stats::median_in_place;

/// Exponent guard for the log-divergence generator.
pub const F1_MAX_EXPONENT: f64 = 700.0;

/// Default number of median-of-means groups for empirical estimation.
pub const DEFAULT_DIVERGENCE_GROUPS: usize = 5;

/// Log-divergence generator `f1(x) = x e^(x-1) - 1`, evaluated as
/// `exp(ln x + x - 1) - 1` with the overflow guard. Returns `+inf` when the
/// exponent exceeds [`F1_MAX_EXPONENT`].
pub fn f1(x: f64) -> f64 {
    if x == 0.0 {
        return -1.0;
    }
    let exponent = x.ln() + x - 1.0;
    if exponent > F1_MAX_EXPONENT {
        f64::INFINITY
    } else {
        exponent.exp() - 1.0
    }
}

/// Chi-square generator `f2(x) = x^2 - 1`.
pub fn f2(x: f64) -> f64 {
    x * x - 1.0
}

/// Divergence between two distributions over arms for a single context:
/// `sum_v q(v) f(p(v)/q(v))`.
///
/// Zero handling: `p = q = 0` contributes nothing (the limit along `p = q`);
/// `q = 0 < p` makes the divergence unbounded (`+inf`).
pub fn single_context_f_divergence<F: Fn(f64) -> f64>(p: &[f64], q: &[f64], f: &F) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if qi == 0.0 {
            if pi > 0.0 {
                return f64::INFINITY;
            }
        } else {
            total += qi * f(pi / qi);
        }
    }
    total
}

/// Conditional f-divergence `D_f(p_i || p_j)` over a finite context set:
/// `sum_x w(x) sum_v p_j(v|x) f(p_i(v|x) / p_j(v|x))`.
pub fn conditional_f_divergence<F: Fn(f64) -> f64>(
    rows_i: &[Vec<f64>],
    rows_j: &[Vec<f64>],
    context_weights: &[f64],
    f: F,
) -> Result<f64> {
    if rows_i.len() != context_weights.len() || rows_j.len() != context_weights.len() {
        return Err(Error::DimensionMismatch {
            what: "divergence context rows",
            expected: context_weights.len(),
            found: rows_i.len().min(rows_j.len()),
        });
    }
    let mut wsum = 0.0;
    let mut total = 0.0;
    for ((pi, pj), &w) in rows_i.iter().zip(rows_j).zip(context_weights) {
        if pi.len() != pj.len() {
            return Err(Error::DimensionMismatch {
                what: "divergence arm rows",
                expected: pi.len(),
                found: pj.len(),
            });
        }
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidProbability { index: 0, value: w });
        }
        wsum += w;
        if w > 0.0 {
            total += w * single_context_f_divergence(pi, pj, &f);
        }
    }
    if (wsum - 1.0).abs() > 1e-9 {
        return Err(Error::DistributionSum {
            sum: wsum,
            tol: 1e-9,
        });
    }
    Ok(total)
}

/// `M_ij = 1 + ln(1 + D_f1(p_i || p_j))`; `+inf` flags an unbounded pair.
pub fn m_divergence(
    rows_i: &[Vec<f64>],
    rows_j: &[Vec<f64>],
    context_weights: &[f64],
) -> Result<f64> {
    let d = conditional_f_divergence(rows_i, rows_j, context_weights, f1)?;
    Ok(1.0 + d.ln_1p())
}

/// `sigma_ij = sqrt(1 + D_f2(p_i || p_j))`; the square is the quantity the
/// confidence analysis uses, the root is what the estimator weights consume.
pub fn sigma_divergence(
    rows_i: &[Vec<f64>],
    rows_j: &[Vec<f64>],
    context_weights: &[f64],
) -> Result<f64> {
    let d = conditional_f_divergence(rows_i, rows_j, context_weights, f2)?;
    Ok((1.0 + d).sqrt())
}

/// Pairwise divergence matrices over an expert pool.
///
/// Entries are at least one with unit diagonal. `+inf` entries mark pairs
/// whose divergence is unbounded; [`DivergenceMatrix::is_bounded`] reports
/// whether the bounded-divergence assumptions hold for the whole pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DivergenceMatrixRepr", into = "DivergenceMatrixRepr")]
pub struct DivergenceMatrix {
    m: Vec<Vec<f64>>,
    sigma: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct DivergenceMatrixRepr {
    m: Vec<Vec<f64>>,
    sigma: Vec<Vec<f64>>,
}

impl TryFrom<DivergenceMatrixRepr> for DivergenceMatrix {
    type Error = Error;
    fn try_from(repr: DivergenceMatrixRepr) -> Result<Self> {
        DivergenceMatrix::new(repr.m, repr.sigma)
    }
}

impl From<DivergenceMatrix> for DivergenceMatrixRepr {
    fn from(d: DivergenceMatrix) -> Self {
        DivergenceMatrixRepr {
            m: d.m,
            sigma: d.sigma,
        }
    }
}

impl DivergenceMatrix {
    pub fn new(m: Vec<Vec<f64>>, sigma: Vec<Vec<f64>>) -> Result<Self> {
        let n = m.len();
        if sigma.len() != n {
            return Err(Error::DimensionMismatch {
                what: "divergence matrices",
                expected: n,
                found: sigma.len(),
            });
        }
        for (name, mat) in [("m", &m), ("sigma", &sigma)] {
            for (i, row) in mat.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::DimensionMismatch {
                        what: "divergence matrix row",
                        expected: n,
                        found: row.len(),
                    });
                }
                for (j, &v) in row.iter().enumerate() {
                    if v.is_nan() || v < 1.0 - 1e-12 {
                        return Err(Error::Malformed {
                            what: "divergence matrix",
                            detail: format!("{name}[{i}][{j}] = {v}, must be >= 1"),
                        });
                    }
                    if i == j && v != 1.0 {
                        return Err(Error::Malformed {
                            what: "divergence matrix",
                            detail: format!("{name}[{i}][{i}] = {v}, diagonal must be 1"),
                        });
                    }
                }
            }
        }
        Ok(DivergenceMatrix { m, sigma })
    }

    /// All-ones matrices (a pool of identical experts).
    pub fn identity(n: usize) -> Self {
        DivergenceMatrix {
            m: vec![vec![1.0; n]; n],
            sigma: vec![vec![1.0; n]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn m(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn sigma(&self) -> &[Vec<f64>] {
        &self.sigma
    }

    /// Row of log-divergences M_kj used to weight samples for target `k`.
    pub fn m_row(&self, k: usize) -> &[f64] {
        &self.m[k]
    }

    /// Row of chi-square terms sigma_kj for target `k`.
    pub fn sigma_row(&self, k: usize) -> &[f64] {
        &self.sigma[k]
    }

    /// sigma^2_ij, the quantity bounded by the chi-square assumption.
    pub fn sigma_sq(&self, i: usize, j: usize) -> f64 {
        self.sigma[i][j] * self.sigma[i][j]
    }

    pub fn max_m(&self) -> f64 {
        self.m
            .iter()
            .flatten()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_sigma(&self) -> f64 {
        self.sigma
            .iter()
            .flatten()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// True when every entry is finite (bounded-divergence assumptions hold).
    pub fn is_bounded(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
            && self.sigma.iter().flatten().all(|v| v.is_finite())
    }
}

fn tabular_rows(expert: &Expert, num_contexts: usize) -> Result<Vec<Vec<f64>>> {
    (0..num_contexts)
        .map(|x| expert.evaluate(&ContextValue::Discrete(x)))
        .collect()
}

/// Exact divergence matrix for experts defined on a finite context set with
/// marginal `context_weights`. Diagonals are set to exactly one.
pub fn exact_divergence_matrix(
    experts: &[Expert],
    context_weights: &[f64],
) -> Result<DivergenceMatrix> {
    let n = experts.len();
    let rows: Vec<Vec<Vec<f64>>> = experts
        .iter()
        .map(|e| tabular_rows(e, context_weights.len()))
        .collect::<Result<_>>()?;
    let mut m = vec![vec![1.0; n]; n];
    let mut sigma = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            m[i][j] = m_divergence(&rows[i], &rows[j], context_weights)?;
            sigma[i][j] = sigma_divergence(&rows[i], &rows[j], context_weights)?;
        }
    }
    DivergenceMatrix::new(m, sigma)
}

/// Incremental empirical divergence estimator.
///
/// Per ordered pair, per-context divergence values are assigned round-robin
/// (context order modulo the group count) to median-of-means groups; the
/// estimate is the median of group means, transformed per measure. Contexts
/// and experts can be appended as a run progresses; [`Self::matrix`] gives
/// the current estimate. Results are identical to the one-shot
/// [`empirical_divergences`] on the same contexts.
#[derive(Debug, Clone)]
pub struct EmpiricalDivergenceAccumulator {
    num_groups: usize,
    /// Cached expert distributions, one row per observed context.
    probs: Vec<Vec<Vec<f64>>>,
    group_counts: Vec<u64>,
    /// Group sums per ordered pair: `sums[i][j][g] = (sum f1, sum f2)`.
    sums: Vec<Vec<Vec<(f64, f64)>>>,
    contexts_seen: usize,
}

impl EmpiricalDivergenceAccumulator {
    pub fn new(num_groups: usize) -> Self {
        EmpiricalDivergenceAccumulator {
            num_groups: num_groups.max(1),
            probs: Vec::new(),
            group_counts: vec![0; num_groups.max(1)],
            sums: Vec::new(),
            contexts_seen: 0,
        }
    }

    pub fn num_experts(&self) -> usize {
        self.probs.len()
    }

    pub fn contexts_seen(&self) -> usize {
        self.contexts_seen
    }

    /// Register experts `self.num_experts()..experts.len()`, replaying them
    /// over the already-observed contexts (passed again as `past_contexts`).
    pub fn add_experts(
        &mut self,
        experts: &[Expert],
        past_contexts: &[ContextValue],
    ) -> Result<()> {
        let old_n = self.probs.len();
        let new_n = experts.len();
        if new_n < old_n {
            return Err(Error::Malformed {
                what: "expert pool",
                detail: "pool shrank; experts are append-only".into(),
            });
        }
        if past_contexts.len() != self.contexts_seen {
            return Err(Error::DimensionMismatch {
                what: "replay contexts",
                expected: self.contexts_seen,
                found: past_contexts.len(),
            });
        }
        for expert in &experts[old_n..] {
            let rows = past_contexts
                .iter()
                .map(|c| expert.evaluate(c))
                .collect::<Result<Vec<_>>>()?;
            self.probs.push(rows);
        }
        for row in self.sums.iter_mut() {
            row.resize(new_n, vec![(0.0, 0.0); self.num_groups]);
        }
        self.sums
            .resize(new_n, vec![vec![(0.0, 0.0); self.num_groups]; new_n]);
        // Replay stored contexts for every pair that involves a new expert.
        for c in 0..self.contexts_seen {
            let g = c % self.num_groups;
            for i in 0..new_n {
                for j in 0..new_n {
                    if i == j || (i < old_n && j < old_n) {
                        continue;
                    }
                    let d1 = single_context_f_divergence(&self.probs[i][c], &self.probs[j][c], &f1);
                    let d2 = single_context_f_divergence(&self.probs[i][c], &self.probs[j][c], &f2);
                    let cell = &mut self.sums[i][j][g];
                    cell.0 += d1;
                    cell.1 += d2;
                }
            }
        }
        Ok(())
    }

    /// Fold newly observed contexts into every pair's group sums.
    pub fn add_contexts(&mut self, experts: &[Expert], contexts: &[ContextValue]) -> Result<()> {
        if experts.len() != self.probs.len() {
            return Err(Error::DimensionMismatch {
                what: "expert pool",
                expected: self.probs.len(),
                found: experts.len(),
            });
        }
        let n = experts.len();
        for ctx in contexts {
            let c = self.contexts_seen;
            let g = c % self.num_groups;
            for (e, expert) in experts.iter().enumerate() {
                let row = expert.evaluate(ctx)?;
                self.probs[e].push(row);
            }
            self.group_counts[g] += 1;
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let d1 = single_context_f_divergence(&self.probs[i][c], &self.probs[j][c], &f1);
                    let d2 = single_context_f_divergence(&self.probs[i][c], &self.probs[j][c], &f2);
                    let cell = &mut self.sums[i][j][g];
                    cell.0 += d1;
                    cell.1 += d2;
                }
            }
            self.contexts_seen += 1;
        }
        Ok(())
    }

    /// Current estimate. Requires at least one observed context.
    pub fn matrix(&self) -> Result<DivergenceMatrix> {
        if self.contexts_seen == 0 {
            return Err(Error::InsufficientData("no contexts observed"));
        }
        let n = self.probs.len();
        let mut m = vec![vec![1.0; n]; n];
        let mut sigma = vec![vec![1.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mut means1 = Vec::with_capacity(self.num_groups);
                let mut means2 = Vec::with_capacity(self.num_groups);
                for g in 0..self.num_groups {
                    let count = self.group_counts[g];
                    if count > 0 {
                        let (s1, s2) = self.sums[i][j][g];
                        means1.push(s1 / count as f64);
                        means2.push(s2 / count as f64);
                    }
                }
                let d1 = median_in_place(&mut means1);
                let d2 = median_in_place(&mut means2);
                m[i][j] = 1.0 + d1.ln_1p();
                sigma[i][j] = (1.0 + d2).sqrt();
            }
        }
        DivergenceMatrix::new(m, sigma)
    }
}

/// One-shot empirical divergence matrix from observed contexts.
///
/// Median-of-means over per-context divergence values with round-robin group
/// assignment; `num_groups` is clamped to the context count. Diagonals are
/// exactly one.
pub fn empirical_divergences(
    experts: &[Expert],
    contexts: &[ContextValue],
    num_groups: usize,
) -> Result<DivergenceMatrix> {
    if contexts.is_empty() {
        return Err(Error::InsufficientData("no contexts observed"));
    }
    let groups = num_groups.clamp(1, contexts.len());
    let mut acc = EmpiricalDivergenceAccumulator::new(groups);
    acc.add_experts(experts, &[])?;
    acc.add_contexts(experts, contexts)?;
    acc.matrix()
}
