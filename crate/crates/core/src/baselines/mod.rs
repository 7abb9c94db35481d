//! Post-hoc attribution baselines computed from cached outcomes: Shapley
//! values under several coalition value functions, Shapley values from a
//! recorded subset-value lattice, and win-rate scores.

mod shap;
mod table;
mod winrate;

pub use shap::{
    coalition_value, shap_exact, shap_exact_problem, shap_permutation, CoalitionKind, ShapMethod, ShapResult,
    DEFAULT_EXACT_LIMIT,
};
pub use table::{shap_from_table, SubsetValueTable};
pub use winrate::{
    flat_winrate, hierarchical_winrate, online_winrate, tier_winrate, winrate_baselines, TierMass, WinRateInput,
    WinRateVariant,
};

/// Shapley weight `|S|! (n - |S| - 1)! / n!` for every coalition size `|S|`.
pub(crate) fn shapley_weights(n: usize) -> Vec<f64> {
    // 1 / (n * C(n-1, s)), with the binomial built up incrementally
    let mut out = Vec::with_capacity(n);
    let mut binom = 1.0f64;
    for s in 0..n {
        out.push(1.0 / (n as f64 * binom));
        binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
    }
    out
}

/// Exact Shapley values of a game given as `v[mask]` over `n` players, with
/// `v[0] = 0`.
pub(crate) fn shapley_from_lattice(v: &[f64], n: usize) -> Vec<f64> {
    let weights = shapley_weights(n);
    let mut phi = vec![0.0; n];
    for mask in 0..v.len() {
        let size = (mask as u32).count_ones() as usize;
        if size == n {
            continue;
        }
        let w = weights[size];
        for (i, p) in phi.iter_mut().enumerate() {
            if mask & (1 << i) == 0 {
                *p += w * (v[mask | (1 << i)] - v[mask]);
            }
        }
    }
    phi
}
