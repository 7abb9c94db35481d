use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{shapley_from_lattice, shapley_weights};
use crate::error::{Error, Result};
use crate::matrix::PassMatrix;
use crate::rng;

pub const DEFAULT_EXACT_LIMIT: usize = 20;

/// How a coalition of components scores a single problem. The empty
/// coalition is worth 0 under every kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoalitionKind {
    /// 1 if any member passes.
    Or,
    /// Fraction of members that pass.
    CountFraction,
    /// Highest overall pass rate among members, independent of the problem.
    BestRate,
    /// 1 if strictly more than half of the members pass.
    MajorityVote,
}

impl CoalitionKind {
    pub const ALL: [CoalitionKind; 4] = [
        CoalitionKind::Or,
        CoalitionKind::CountFraction,
        CoalitionKind::BestRate,
        CoalitionKind::MajorityVote,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CoalitionKind::Or => "or",
            CoalitionKind::CountFraction => "count-fraction",
            CoalitionKind::BestRate => "best-rate",
            CoalitionKind::MajorityVote => "majority-vote",
        }
    }

    fn score(self, passing: usize, size: usize, best_rate: f64) -> f64 {
        if size == 0 {
            return 0.0;
        }
        match self {
            CoalitionKind::Or => (passing > 0) as u8 as f64,
            CoalitionKind::CountFraction => passing as f64 / size as f64,
            CoalitionKind::BestRate => best_rate,
            CoalitionKind::MajorityVote => (2 * passing > size) as u8 as f64,
        }
    }
}

impl fmt::Display for CoalitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CoalitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "or" => Ok(CoalitionKind::Or),
            "count-fraction" | "count" => Ok(CoalitionKind::CountFraction),
            "best-rate" | "best" => Ok(CoalitionKind::BestRate),
            "majority-vote" | "majority" => Ok(CoalitionKind::MajorityVote),
            other => Err(Error::InvalidConfig(format!(
                "unknown coalition kind `{other}` (expected or, count-fraction, best-rate, majority-vote)"
            ))),
        }
    }
}

/// v(S) on one problem. Best-rate uses the matrix-wide pass rates.
pub fn coalition_value(matrix: &PassMatrix, problem: usize, members: &[usize], kind: CoalitionKind) -> Result<f64> {
    let n = matrix.n_components();
    if problem >= matrix.n_problems() {
        return Err(Error::IndexOutOfRange {
            index: problem,
            len: matrix.n_problems(),
        });
    }
    if let Some(&bad) = members.iter().find(|&&c| c >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    let passing = members.iter().filter(|&&c| matrix.passes(problem, c)).count();
    let best = if kind == CoalitionKind::BestRate {
        let rates = matrix.pass_rates();
        members.iter().map(|&c| rates[c]).fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(kind.score(passing, members.len(), best))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum ShapMethod {
    Permutation { permutations: usize, seed: u64 },
    Exact,
    Table,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapResult {
    pub labels: Vec<String>,
    /// Mean Shapley value per component over problems.
    pub phi: Vec<f64>,
    pub method: ShapMethod,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kind: Option<CoalitionKind>,
    /// Coalition-value evaluations performed.
    pub evaluations: u64,
}

/// Monte Carlo Shapley values: `permutations` fresh orderings per problem,
/// each walked once with incremental coalition values. Problem `i` draws from
/// stream `(seed, SHAP_STREAM_BASE + i)`, so the result does not depend on
/// how problems are scheduled across threads.
pub fn shap_permutation(
    matrix: &PassMatrix,
    kind: CoalitionKind,
    permutations: usize,
    seed: u64,
) -> Result<ShapResult> {
    if permutations == 0 {
        return Err(Error::InvalidConfig("permutation count must be at least 1".into()));
    }
    let n = matrix.n_components();
    let rates = matrix.pass_rates();
    let per_problem: Vec<Vec<f64>> = (0..matrix.n_problems())
        .into_par_iter()
        .map(|p| {
            let mut rng = rng::stream(seed, rng::SHAP_STREAM_BASE + p as u64);
            let row = matrix.row(p);
            let mut order: Vec<usize> = (0..n).collect();
            let mut phi = vec![0.0; n];
            for _ in 0..permutations {
                order.shuffle(&mut rng);
                let (mut passing, mut best, mut prev) = (0usize, 0.0f64, 0.0f64);
                for (size, &c) in order.iter().enumerate() {
                    passing += row[c] as usize;
                    best = best.max(rates[c]);
                    let v = kind.score(passing, size + 1, best);
                    phi[c] += v - prev;
                    prev = v;
                }
            }
            phi.iter_mut().for_each(|x| *x /= permutations as f64);
            phi
        })
        .collect();
    Ok(ShapResult {
        labels: matrix.components().to_vec(),
        phi: mean_rows(&per_problem, n),
        method: ShapMethod::Permutation { permutations, seed },
        kind: Some(kind),
        evaluations: (matrix.n_problems() * permutations * n) as u64,
    })
}

fn mean_rows(rows: &[Vec<f64>], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for r in rows {
        for (o, x) in out.iter_mut().zip(r) {
            *o += x;
        }
    }
    let count = rows.len().max(1) as f64;
    out.iter_mut().for_each(|x| *x /= count);
    out
}

/// v over every mask for one pass pattern, built from the mask with its
/// highest bit cleared.
fn lattice(row: &[u8], rates: &[f64], kind: CoalitionKind) -> Vec<f64> {
    let n = row.len();
    let size = 1usize << n;
    let mut passing = vec![0u8; size];
    let mut best = vec![0.0f64; size];
    let mut v = vec![0.0; size];
    for mask in 1..size {
        let top = usize::BITS - 1 - mask.leading_zeros();
        let rest = mask & !(1 << top);
        passing[mask] = passing[rest] + row[top as usize];
        best[mask] = best[rest].max(rates[top as usize]);
        v[mask] = kind.score(passing[mask] as usize, mask.count_ones() as usize, best[mask]);
    }
    v
}

fn check_limit(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        Err(Error::ExactLimit { n, limit })
    } else {
        Ok(())
    }
}

/// Exact Shapley values for kinds whose value depends only on how many
/// members pass and how many fail. The subset sum then groups into
/// `(passing, failing)` classes of size `C(p, a) * C(f, b)`. Returns the
/// values and the number of coalition evaluations made.
fn class_shapley(row: &[u8], kind: CoalitionKind) -> (Vec<f64>, u64) {
    let n = row.len();
    let p = row.iter().filter(|&&c| c == 1).count();
    let f = n - p;
    let weights = shapley_weights(n);
    let mut binom = vec![vec![0.0f64; n + 1]; n + 1];
    for i in 0..=n {
        binom[i][0] = 1.0;
        for j in 1..=i {
            binom[i][j] = binom[i - 1][j - 1] + binom[i - 1][j];
        }
    }
    let mut evals = 0u64;
    let mut v = |a: usize, size: usize| {
        evals += 1;
        kind.score(a, size, 0.0)
    };
    let mut pass_phi = 0.0;
    for a in 0..p {
        for b in 0..=f {
            let gain = v(a + 1, a + b + 1) - v(a, a + b);
            pass_phi += binom[p - 1][a] * binom[f][b] * weights[a + b] * gain;
        }
    }
    let mut fail_phi = 0.0;
    for a in 0..=p {
        for b in 0..f {
            let gain = v(a, a + b + 1) - v(a, a + b);
            fail_phi += binom[p][a] * binom[f - 1][b] * weights[a + b] * gain;
        }
    }
    let phi = row.iter().map(|&c| if c == 1 { pass_phi } else { fail_phi }).collect();
    (phi, evals)
}

/// Exact Shapley values for a single problem.
pub fn shap_exact_problem(matrix: &PassMatrix, kind: CoalitionKind, problem: usize) -> Result<Vec<f64>> {
    let n = matrix.n_components();
    check_limit(n, DEFAULT_EXACT_LIMIT)?;
    if problem >= matrix.n_problems() {
        return Err(Error::IndexOutOfRange {
            index: problem,
            len: matrix.n_problems(),
        });
    }
    Ok(shapley_from_lattice(
        &lattice(matrix.row(problem), &matrix.pass_rates(), kind),
        n,
    ))
}

/// Exact Shapley values averaged over problems. Problems with identical
/// pass patterns are solved once (all problems share one game under
/// best-rate, which is enumerated over the full lattice).
pub fn shap_exact(matrix: &PassMatrix, kind: CoalitionKind, limit: usize) -> Result<ShapResult> {
    let n = matrix.n_components();
    check_limit(n, limit)?;
    let rates = matrix.pass_rates();
    let mut patterns: Vec<&[u8]> = Vec::new();
    let mut multiplicity: HashMap<&[u8], usize> = HashMap::new();
    for p in 0..matrix.n_problems() {
        let row = if kind == CoalitionKind::BestRate {
            matrix.row(0)
        } else {
            matrix.row(p)
        };
        let count = multiplicity.entry(row).or_insert(0);
        if *count == 0 {
            patterns.push(row);
        }
        *count += 1;
    }
    let per_pattern: Vec<(Vec<f64>, u64)> = patterns
        .par_iter()
        .map(|row| match kind {
            CoalitionKind::BestRate => (shapley_from_lattice(&lattice(row, &rates, kind), n), (1u64 << n) - 1),
            _ => class_shapley(row, kind),
        })
        .collect();
    let mut phi = vec![0.0; n];
    for (row, (values, _)) in patterns.iter().zip(&per_pattern) {
        let weight = multiplicity[row] as f64;
        for (o, x) in phi.iter_mut().zip(values) {
            *o += weight * x;
        }
    }
    let total = matrix.n_problems().max(1) as f64;
    phi.iter_mut().for_each(|x| *x /= total);
    Ok(ShapResult {
        labels: matrix.components().to_vec(),
        phi,
        method: ShapMethod::Exact,
        kind: Some(kind),
        evaluations: per_pattern.iter().map(|(_, e)| e).sum(),
    })
}
