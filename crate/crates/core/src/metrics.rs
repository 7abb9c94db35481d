//! Rank correlations, seed aggregation, pruning curves and the cell-level
//! disagreement diagnostic.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::matrix::PassMatrix;

/// Below this length the tau p-value is computed by exact enumeration.
pub const EXACT_PVALUE_BELOW: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankComparison {
    /// Kendall tau-b.
    pub tau: f64,
    /// Spearman rho on average ranks.
    pub rho: f64,
    /// Two-sided p-value for tau.
    pub p_value: f64,
    pub n: usize,
}

/// Kendall tau-b with Spearman rho and a two-sided p-value.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<RankComparison> {
    let counts = pair_counts(a, b)?;
    let n0 = counts.n0 as f64;
    let denom = ((n0 - counts.ties_a as f64) * (n0 - counts.ties_b as f64)).sqrt();
    let s = counts.s as f64;
    let tau = s / denom;
    let rho = spearman(a, b)?;
    let p_value = if a.len() < EXACT_PVALUE_BELOW {
        exact_p_value(a, b, counts.s)
    } else {
        normal_p_value(a, b, s)
    };
    Ok(RankComparison {
        tau,
        rho,
        p_value,
        n: a.len(),
    })
}

/// Kendall tau-b only.
pub fn tau_b(a: &[f64], b: &[f64]) -> Result<f64> {
    let counts = pair_counts(a, b)?;
    let n0 = counts.n0 as f64;
    Ok(counts.s as f64 / ((n0 - counts.ties_a as f64) * (n0 - counts.ties_b as f64)).sqrt())
}

#[derive(Debug)]
struct PairCounts {
    n0: u64,
    ties_a: u64,
    ties_b: u64,
    /// concordant minus discordant
    s: i64,
}

fn check_inputs(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("lengths {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two items".into()));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::UndefinedCorrelation("NaN in input".into()));
    }
    Ok(())
}

fn tie_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Knight's O(n log n) pair counting.
fn pair_counts(a: &[f64], b: &[f64]) -> Result<PairCounts> {
    check_inputs(a, b)?;
    let n = a.len() as u64;
    let n0 = n * (n - 1) / 2;
    let mut pairs: Vec<(f64, f64)> = a.iter().copied().zip(b.iter().copied()).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));

    let mut ties_a = 0u64;
    let mut ties_joint = 0u64;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i + 1;
        while j < pairs.len() && pairs[j].0 == pairs[i].0 {
            j += 1;
        }
        let run = (j - i) as u64;
        ties_a += run * (run - 1) / 2;
        let mut k = i;
        while k < j {
            let mut m = k + 1;
            while m < j && pairs[m].1 == pairs[k].1 {
                m += 1;
            }
            let r = (m - k) as u64;
            ties_joint += r * (r - 1) / 2;
            k = m;
        }
        i = j;
    }

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let swaps = merge_count(&mut ys, &mut buf);
    let ties_b = tie_pairs(&ys);
    if ties_a == n0 || ties_b == n0 {
        return Err(Error::UndefinedCorrelation("zero variance in ranks".into()));
    }
    let s = n0 as i64 - ties_a as i64 - ties_b as i64 + ties_joint as i64 - 2 * swaps as i64;
    Ok(PairCounts { n0, ties_a, ties_b, s })
}

/// Sort ascending, returning the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

fn normal_p_value(a: &[f64], b: &[f64], s: f64) -> f64 {
    let n = a.len() as f64;
    let groups = |v: &[f64]| -> Vec<f64> {
        let mut sorted = v.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut out = Vec::new();
        let mut run = 1.0;
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                run += 1.0;
            } else {
                out.push(run);
                run = 1.0;
            }
        }
        out.push(run);
        out
    };
    let (ta, tb) = (groups(a), groups(b));
    let sum = |g: &[f64], f: &dyn Fn(f64) -> f64| g.iter().map(|&t| f(t)).sum::<f64>();
    let v0 = n * (n - 1.0) * (2.0 * n + 5.0);
    let vt = sum(&ta, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let vu = sum(&tb, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let v1 = sum(&ta, &|t| t * (t - 1.0)) * sum(&tb, &|t| t * (t - 1.0));
    let v2 = sum(&ta, &|t| t * (t - 1.0) * (t - 2.0)) * sum(&tb, &|t| t * (t - 1.0) * (t - 2.0));
    let mut var = (v0 - vt - vu) / 18.0 + v1 / (2.0 * n * (n - 1.0));
    if n > 2.0 {
        var += v2 / (9.0 * n * (n - 1.0) * (n - 2.0));
    }
    if var <= 0.0 {
        return 1.0;
    }
    let z = s.abs() / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}

fn s_statistic(a: &[f64], b: &[f64]) -> i64 {
    let mut s = 0i64;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let x = a[i].partial_cmp(&a[j]).map_or(0, |o| o as i64);
            let y = b[i].partial_cmp(&b[j]).map_or(0, |o| o as i64);
            s += x * y;
        }
    }
    s
}

/// Permutation p-value by enumerating every ordering of `b` (Heap's algorithm).
fn exact_p_value(a: &[f64], b: &[f64], observed: i64) -> f64 {
    let mut perm = b.to_vec();
    let n = perm.len();
    let mut c = vec![0usize; n];
    let target = observed.abs();
    let (mut hits, mut total) = (0u64, 0u64);
    let mut visit = |p: &[f64]| {
        total += 1;
        if s_statistic(a, p).abs() >= target {
            hits += 1;
        }
    };
    visit(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    hits as f64 / total as f64
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && v[idx[j]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_inputs(a, b)?;
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance in ranks".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub mean: Vec<f64>,
    /// Per-seed tau against the reference; `None` where undefined.
    pub per_seed_tau: Vec<Option<f64>>,
    pub tau_mean: f64,
    /// Sample standard deviation (n - 1).
    pub tau_std: f64,
    /// Tau of the seed-averaged vector against the reference.
    pub tau_of_mean: Option<f64>,
}

/// Mean of per-seed vectors plus per-seed and seed-averaged tau against `reference`.
pub fn seed_aggregate(per_seed: &[Vec<f64>], reference: &[f64]) -> Result<SeedAggregate> {
    let first = per_seed
        .first()
        .ok_or_else(|| Error::ShapeMismatch("no seeds to aggregate".into()))?;
    if let Some(v) = per_seed.iter().find(|v| v.len() != first.len()) {
        return Err(Error::ShapeMismatch(format!(
            "seed vector lengths {} and {}",
            first.len(),
            v.len()
        )));
    }
    let mut mean = vec![0.0; first.len()];
    for v in per_seed {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    let n = per_seed.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let per_seed_tau: Vec<Option<f64>> = per_seed.iter().map(|v| tau_b(reference, v).ok()).collect();
    let defined: Vec<f64> = per_seed_tau.iter().flatten().copied().collect();
    let (tau_mean, tau_std) = mean_std(&defined);
    Ok(SeedAggregate {
        tau_of_mean: tau_b(reference, &mean).ok(),
        mean,
        per_seed_tau,
        tau_mean,
        tau_std,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruningReport {
    pub removal_order: Vec<String>,
    /// Active-set sizes N, N-1, ..., 1.
    pub remaining: Vec<usize>,
    /// Coverage at each entry of `remaining`.
    pub coverage: Vec<f64>,
    /// Mean coverage over remaining counts N..1.
    pub aupc: f64,
}

impl PruningReport {
    pub fn coverage_at(&self, remaining: usize) -> Option<f64> {
        self.remaining
            .iter()
            .position(|&r| r == remaining)
            .map(|i| self.coverage[i])
    }

    /// Point-wise mean of several curves over the same component count.
    pub fn average(reports: &[PruningReport], label: &str) -> Option<PruningReport> {
        let first = reports.first()?;
        let n = reports.len() as f64;
        let coverage: Vec<f64> = (0..first.coverage.len())
            .map(|i| reports.iter().map(|r| r.coverage[i]).sum::<f64>() / n)
            .collect();
        Some(PruningReport {
            removal_order: vec![label.to_string()],
            remaining: first.remaining.clone(),
            aupc: coverage.iter().sum::<f64>() / coverage.len() as f64,
            coverage,
        })
    }
}

/// Coverage as components are removed in `order` (column indices), from all
/// N active down to the single last component.
pub fn pruning_curve(matrix: &PassMatrix, order: &[usize]) -> Result<PruningReport> {
    let n = matrix.n_components();
    if !crate::hierarchy::is_permutation(order, n) {
        return Err(Error::NotAPermutation(format!("{order:?} over {n} components")));
    }
    let mut active = vec![true; n];
    let mut remaining = Vec::with_capacity(n);
    let mut coverage = Vec::with_capacity(n);
    // per-problem count of active solvers, updated incrementally
    let mut solvers: Vec<usize> = (0..matrix.n_problems())
        .map(|p| matrix.row(p).iter().filter(|&&c| c == 1).count())
        .collect();
    let mut solved = solvers.iter().filter(|&&s| s > 0).count();
    let total = matrix.n_problems().max(1) as f64;
    for (step, &c) in order.iter().enumerate() {
        remaining.push(n - step);
        coverage.push(solved as f64 / total);
        if step + 1 == n {
            break;
        }
        active[c] = false;
        for (p, s) in solvers.iter_mut().enumerate() {
            if matrix.passes(p, c) {
                *s -= 1;
                if *s == 0 {
                    solved -= 1;
                }
            }
        }
    }
    let aupc = coverage.iter().sum::<f64>() / coverage.len() as f64;
    Ok(PruningReport {
        removal_order: order.iter().map(|&c| matrix.components()[c].clone()).collect(),
        remaining,
        coverage,
        aupc,
    })
}

/// Per-cell comparison of routing attribution against Shapley attribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellDiagnostic {
    pub tools: Vec<String>,
    pub routing: Vec<f64>,
    pub shap: Vec<f64>,
    pub pass_rates: Vec<f64>,
    pub tau: f64,
    pub top_pick: String,
    pub top_share: f64,
    pub top_equals_best: bool,
}

/// One row of the cell diagnostic table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub driver: String,
    pub benchmark: String,
    pub tau: f64,
    pub top_share: f64,
    pub top_equals_best: bool,
    pub top_label: String,
}

impl CellDiagnostic {
    pub fn to_row(&self, driver: &str, benchmark: &str) -> DiagnosticRow {
        DiagnosticRow {
            driver: driver.to_string(),
            benchmark: benchmark.to_string(),
            tau: self.tau,
            top_share: self.top_share,
            top_equals_best: self.top_equals_best,
            top_label: self.top_pick.clone(),
        }
    }
}

fn aligned(tools: &[String], values: &[(String, f64)], what: &str) -> Result<Vec<f64>> {
    if values.len() != tools.len() {
        return Err(Error::ShapeMismatch(format!(
            "{what} has {} tools, expected {}",
            values.len(),
            tools.len()
        )));
    }
    let map: HashMap<&str, f64> = values.iter().map(|(l, v)| (l.as_str(), *v)).collect();
    tools
        .iter()
        .map(|t| {
            map.get(t.as_str())
                .copied()
                .ok_or_else(|| Error::UnknownLabel(format!("{t} (missing from {what})")))
        })
        .collect()
}

/// Compare routing and Shapley attributions for one cell. `picks` is the
/// deployed tool per route; tool order follows `routing`.
pub fn cell_diagnostic(
    picks: &[String],
    routing: &[(String, f64)],
    shap: &[(String, f64)],
    pass_rates: &[(String, f64)],
) -> Result<CellDiagnostic> {
    if picks.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let tools: Vec<String> = routing.iter().map(|(l, _)| l.clone()).collect();
    let routing_v: Vec<f64> = routing.iter().map(|(_, v)| *v).collect();
    let shap_v = aligned(&tools, shap, "shap")?;
    let rates = aligned(&tools, pass_rates, "pass rates")?;
    let mut counts = vec![0usize; tools.len()];
    for p in picks {
        let i = tools
            .iter()
            .position(|t| t == p)
            .ok_or_else(|| Error::UnknownLabel(format!("{p} (picked in trace)")))?;
        counts[i] += 1;
    }
    let top = (0..tools.len())
        .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
        .expect("non-empty tools");
    let best = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(CellDiagnostic {
        tau: tau_b(&routing_v, &shap_v)?,
        top_pick: tools[top].clone(),
        top_share: counts[top] as f64 / picks.len() as f64,
        top_equals_best: rates[top] >= best,
        tools,
        routing: routing_v,
        shap: shap_v,
        pass_rates: rates,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionDelta {
    pub mean_top_best: Option<f64>,
    pub n_top_best: usize,
    pub mean_top_not_best: Option<f64>,
    pub n_top_not_best: usize,
    /// `mean_top_best - mean_top_not_best`, when both groups are present.
    pub delta: Option<f64>,
}

/// Group means of cell tau split on the top-equals-best flag.
pub fn partition_delta(rows: &[DiagnosticRow]) -> PartitionDelta {
    let group = |flag: bool| -> (Option<f64>, usize) {
        let taus: Vec<f64> = rows
            .iter()
            .filter(|r| r.top_equals_best == flag)
            .map(|r| r.tau)
            .collect();
        let n = taus.len();
        ((n > 0).then(|| taus.iter().sum::<f64>() / n as f64), n)
    };
    let (mean_top_best, n_top_best) = group(true);
    let (mean_top_not_best, n_top_not_best) = group(false);
    PartitionDelta {
        delta: mean_top_best.zip(mean_top_not_best).map(|(a, b)| a - b),
        mean_top_best,
        n_top_best,
        mean_top_not_best,
        n_top_not_best,
    }
}

/// Indices sorted by descending score; ties keep index order.
pub fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// O(n^2) tau-b straight from the definition.
    fn tau_b_oracle(a: &[f64], b: &[f64]) -> f64 {
        let (mut c, mut d, mut ta, mut tb) = (0i64, 0i64, 0i64, 0i64);
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                let x = (a[i] - a[j]).signum() * ((a[i] != a[j]) as i32 as f64);
                let y = (b[i] - b[j]).signum() * ((b[i] != b[j]) as i32 as f64);
                if x == 0.0 && y == 0.0 {
                } else if x == 0.0 {
                    ta += 1;
                } else if y == 0.0 {
                    tb += 1;
                } else if x == y {
                    c += 1;
                } else {
                    d += 1;
                }
            }
        }
        (c - d) as f64 / (((c + d + ta) * (c + d + tb)) as f64).sqrt()
    }

    #[test]
    fn tau_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&a, &a).unwrap().tau, 1.0);
        assert_eq!(kendall_tau(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap().tau, -1.0);
        let r = kendall_tau(&a, &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r.tau - 4.0 / 6.0).abs() < 1e-12);
        assert!((r.rho - 0.8).abs() < 1e-12);
    }

    #[test]
    fn tau_errors() {
        assert!(matches!(
            kendall_tau(&[1.0], &[1.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(matches!(
            kendall_tau(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(kendall_tau(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn routing_vs_shap_cell_from_recorded_vectors() {
        // LCB cell with the Qwen3.6 driver
        let routing = [0.42, 0.18, 0.12, 0.13, 0.15];
        let shap = [0.34, 0.23, 0.20, -0.09, -0.03];
        assert!((tau_b(&routing, &shap).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn exact_p_value_small_n() {
        // perfect agreement on 4 items: only the identity permutation reaches |S| = 6 besides its reverse
        let a = [1.0, 2.0, 3.0, 4.0];
        let r = kendall_tau(&a, &a).unwrap();
        assert!((r.p_value - 2.0 / 24.0).abs() < 1e-12);
    }

    #[test]
    fn normal_p_value_matches_reference() {
        // scipy.stats.kendalltau(range(12), [0,2,1,3,5,4,6,8,7,9,11,10], method='asymptotic')
        let a: Vec<f64> = (0..12).map(f64::from).collect();
        let b = [0.0, 2.0, 1.0, 3.0, 5.0, 4.0, 6.0, 8.0, 7.0, 9.0, 11.0, 10.0];
        let r = kendall_tau(&a, &b).unwrap();
        assert!((r.tau - 58.0 / 66.0).abs() < 1e-12);
        // z = 58 / sqrt(12*11*29/18)
        let z: f64 = 58.0 / (12.0 * 11.0 * 29.0 / 18.0f64).sqrt();
        let normal = Normal::new(0.0, 1.0).unwrap();
        assert!((r.p_value - 2.0 * (1.0 - normal.cdf(z))).abs() < 1e-12);
        assert!(r.p_value < 1e-3);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 10.0, 30.0]), vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn seed_aggregation() {
        let reference = [1.0, 2.0, 3.0];
        let one = seed_aggregate(&[vec![0.2, 0.3, 0.5]], &reference).unwrap();
        assert_eq!(one.mean, vec![0.2, 0.3, 0.5]);
        assert_eq!(one.tau_std, 0.0);

        let two = seed_aggregate(&[vec![0.2, 0.3, 0.5], vec![0.5, 0.3, 0.2]], &reference).unwrap();
        assert!(two
            .mean
            .iter()
            .all(|&m| (m - 0.35).abs() < 1e-12 || (m - 0.3).abs() < 1e-12));
        assert_eq!(two.per_seed_tau, vec![Some(1.0), Some(-1.0)]);
        assert_eq!(two.tau_mean, 0.0);
    }

    #[test]
    fn pruning_by_hand() {
        let m = PassMatrix::from_rows(
            vec!["p1".into(), "p2".into(), "p3".into()],
            vec!["m0".into(), "m1".into(), "m2".into()],
            &[vec![1, 0, 0], vec![1, 1, 0], vec![0, 0, 1]],
        )
        .unwrap();
        let r = pruning_curve(&m, &[1, 2, 0]).unwrap();
        assert_eq!(r.remaining, vec![3, 2, 1]);
        assert_eq!(r.coverage[..2], [1.0, 1.0]);
        assert!((r.coverage[2] - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.aupc - (2.0 + 2.0 / 3.0) / 3.0).abs() < 1e-12);
        assert!(matches!(pruning_curve(&m, &[0, 0, 1]), Err(Error::NotAPermutation(_))));

        let single =
            PassMatrix::from_rows(vec!["a".into(), "b".into()], vec!["x".into()], &[vec![1], vec![0]]).unwrap();
        let r = pruning_curve(&single, &[0]).unwrap();
        assert_eq!(r.coverage, vec![0.5]);
    }

    #[test]
    fn diagnostic_and_partition() {
        let tools = ["a", "b", "c"].map(String::from);
        let lab = |v: [f64; 3]| -> Vec<(String, f64)> { tools.iter().cloned().zip(v).collect() };
        let picks: Vec<String> = ["a", "a", "a", "b"].iter().map(|s| s.to_string()).collect();
        let d = cell_diagnostic(
            &picks,
            &lab([0.5, 0.3, 0.2]),
            &lab([0.5, 0.3, 0.2]),
            &lab([0.9, 0.5, 0.1]),
        )
        .unwrap();
        assert_eq!(d.tau, 1.0);
        assert_eq!(d.top_pick, "a");
        assert_eq!(d.top_share, 0.75);
        assert!(d.top_equals_best);
        let scaled = cell_diagnostic(
            &picks,
            &lab([0.5, 0.3, 0.2]),
            &lab([0.5, 0.3, 0.2]),
            &lab([9.0, 5.0, 1.0]),
        )
        .unwrap();
        assert_eq!(scaled.top_equals_best, d.top_equals_best);

        let all_one: Vec<String> = vec!["c".into(); 10];
        let d = cell_diagnostic(
            &all_one,
            &lab([0.1, 0.2, 0.7]),
            &lab([0.1, 0.2, 0.7]),
            &lab([0.9, 0.5, 0.1]),
        )
        .unwrap();
        assert_eq!(d.top_share, 1.0);
        assert!(!d.top_equals_best);

        let missing = vec![("a".to_string(), 0.1), ("b".to_string(), 0.2)];
        assert!(cell_diagnostic(&picks, &lab([0.5, 0.3, 0.2]), &missing, &lab([0.9, 0.5, 0.1])).is_err());

        let row = |tau: f64, flag: bool| DiagnosticRow {
            driver: "d".into(),
            benchmark: "b".into(),
            tau,
            top_share: 0.5,
            top_equals_best: flag,
            top_label: "a".into(),
        };
        let p = partition_delta(&[row(1.0, true), row(-1.0, false)]);
        assert_eq!(p.delta, Some(2.0));
        let p = partition_delta(&[row(1.0, true), row(0.5, true)]);
        assert_eq!(p.mean_top_best, Some(0.75));
        assert_eq!(p.delta, None);
        assert_eq!(p.n_top_not_best, 0);
    }

    proptest! {
        #[test]
        fn knight_matches_pairwise_definition(
            a in prop::collection::vec(0u8..6, 2..40),
            seed in any::<u64>(),
        ) {
            use rand::Rng;
            let mut rng = crate::rng::stream(seed, 0);
            let b: Vec<f64> = a.iter().map(|_| rng.random_range(0..6) as f64).collect();
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            match tau_b(&a, &b) {
                Ok(t) => prop_assert!((t - tau_b_oracle(&a, &b)).abs() < 1e-12),
                Err(_) => prop_assert!(tau_b_oracle(&a, &b).is_nan()),
            }
        }

        #[test]
        fn tau_invariant_under_increasing_maps(a in prop::collection::vec(-10.0f64..10.0, 3..30), shift in -5.0f64..5.0) {
            let b: Vec<f64> = a.iter().rev().copied().collect();
            let mapped: Vec<f64> = a.iter().map(|x| (x + shift).exp()).collect();
            if let (Ok(t1), Ok(t2)) = (tau_b(&a, &b), tau_b(&mapped, &b)) {
                prop_assert!((t1 - t2).abs() < 1e-12);
                prop_assert!((spearman(&a, &b).unwrap() - spearman(&mapped, &b).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn constant_coverage_aupc(n in 1usize..8, solved in 0usize..5) {
            // every component solves the same first `solved` problems of 5
            let rows: Vec<Vec<u8>> = (0..5).map(|p| vec![(p < solved) as u8; n]).collect();
            let m = PassMatrix::from_rows(
                (0..5).map(|p| format!("p{p}")).collect(),
                (0..n).map(|c| format!("c{c}")).collect(),
                &rows,
            ).unwrap();
            let order: Vec<usize> = (0..n).rev().collect();
            let r = pruning_curve(&m, &order).unwrap();
            prop_assert!((r.aupc - solved as f64 / 5.0).abs() < 1e-12);
            prop_assert!(r.coverage.windows(2).all(|w| w[1] <= w[0]));
            prop_assert_eq!(r.coverage[0], m.coverage(&(0..n).collect::<Vec<_>>()));
        }
    }
}
