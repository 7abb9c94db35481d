use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::Tree;
use crate::matrix::PassMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WinRateVariant {
    Flat,
    Hierarchical,
    UniformWithinTier,
    Online,
}

impl WinRateVariant {
    pub const ALL: [WinRateVariant; 4] = [
        WinRateVariant::Flat,
        WinRateVariant::Hierarchical,
        WinRateVariant::UniformWithinTier,
        WinRateVariant::Online,
    ];
}

impl fmt::Display for WinRateVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WinRateVariant::Flat => "flat",
            WinRateVariant::Hierarchical => "hierarchical",
            WinRateVariant::UniformWithinTier => "uniform-within-tier",
            WinRateVariant::Online => "online",
        })
    }
}

impl FromStr for WinRateVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WinRateVariant::ALL
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown win-rate variant `{s}`")))
    }
}

/// How the tier variant distributes mass across the root's children.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TierMass {
    /// Each tier gets `1 / tiers`.
    #[default]
    Equal,
    /// Tiers weighted by their mean leaf pass rate, normalized.
    MeanPassRate,
}

/// Input for [`winrate_baselines`]: the offline variants read a matrix, the
/// online one reads a `(leaf, outcome)` trace.
pub enum WinRateInput<'a> {
    Matrix {
        matrix: &'a PassMatrix,
        tree: &'a Tree,
        tier_mass: TierMass,
    },
    Trace {
        records: &'a [(usize, bool)],
        n_leaves: usize,
    },
}

pub fn winrate_baselines(input: WinRateInput<'_>, variant: WinRateVariant) -> Result<Vec<f64>> {
    match (input, variant) {
        (WinRateInput::Trace { records, n_leaves }, WinRateVariant::Online) => online_winrate(records, n_leaves),
        (WinRateInput::Matrix { matrix, tree, .. }, WinRateVariant::Flat) => {
            Ok(flat_winrate(&leaf_rates(matrix, tree)?))
        }
        (WinRateInput::Matrix { matrix, tree, .. }, WinRateVariant::Hierarchical) => {
            Ok(hierarchical_winrate(tree, &leaf_rates(matrix, tree)?))
        }
        (
            WinRateInput::Matrix {
                matrix,
                tree,
                tier_mass,
            },
            WinRateVariant::UniformWithinTier,
        ) => Ok(tier_winrate(tree, &leaf_rates(matrix, tree)?, tier_mass)),
        (_, v) => Err(Error::InvalidConfig(format!(
            "win-rate variant `{v}` does not accept this input"
        ))),
    }
}

/// Pass rates aligned to the tree's leaf order.
fn leaf_rates(matrix: &PassMatrix, tree: &Tree) -> Result<Vec<f64>> {
    let rates = matrix.pass_rates();
    Ok(matrix
        .columns_for(&tree.leaf_labels())?
        .into_iter()
        .map(|c| rates[c])
        .collect())
}

fn normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    } else {
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = u);
    }
}

/// Pass rates normalized to sum to 1 (uniform when all are zero).
pub fn flat_winrate(rates: &[f64]) -> Vec<f64> {
    let mut out = rates.to_vec();
    normalize(&mut out);
    out
}

fn subtree_mean(tree: &Tree, rates: &[f64], node: crate::hierarchy::NodeId) -> f64 {
    let leaves = tree.subtree_leaves(node);
    leaves.iter().map(|&j| rates[j]).sum::<f64>() / leaves.len() as f64
}

/// Each router scores its children by subtree mean pass rate, normalized;
/// a leaf's score is the product along its route.
pub fn hierarchical_winrate(tree: &Tree, rates: &[f64]) -> Vec<f64> {
    let local: Vec<Vec<f64>> = (0..tree.n_routers())
        .map(|slot| {
            let mut w: Vec<f64> = tree
                .children(tree.router(slot))
                .iter()
                .map(|&c| subtree_mean(tree, rates, c))
                .collect();
            normalize(&mut w);
            w
        })
        .collect();
    (0..tree.n_leaves())
        .map(|j| tree.route(j).iter().map(|s| local[s.router][s.child]).product())
        .collect()
}

/// The root's children are the tiers; each tier's mass is split equally
/// among its leaves.
pub fn tier_winrate(tree: &Tree, rates: &[f64], mass: TierMass) -> Vec<f64> {
    let tiers = tree.children(tree.root());
    let mut tier_mass: Vec<f64> = match mass {
        TierMass::Equal => vec![1.0; tiers.len()],
        TierMass::MeanPassRate => tiers.iter().map(|&t| subtree_mean(tree, rates, t)).collect(),
    };
    normalize(&mut tier_mass);
    let mut out = vec![0.0; tree.n_leaves()];
    for (&tier, m) in tiers.iter().zip(&tier_mass) {
        let leaves = tree.subtree_leaves(tier);
        for &j in &leaves {
            out[j] = m / leaves.len() as f64;
        }
    }
    out
}

/// Laplace-smoothed success rate `(wins + 1) / (selections + 2)` per leaf
/// from a `(leaf, outcome)` trace.
pub fn online_winrate(records: &[(usize, bool)], n_leaves: usize) -> Result<Vec<f64>> {
    if records.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut wins = vec![0u64; n_leaves];
    let mut picks = vec![0u64; n_leaves];
    for &(leaf, outcome) in records {
        if leaf >= n_leaves {
            return Err(Error::IndexOutOfRange {
                index: leaf,
                len: n_leaves,
            });
        }
        picks[leaf] += 1;
        wins[leaf] += outcome as u64;
    }
    Ok(wins
        .iter()
        .zip(&picks)
        .map(|(&w, &n)| (w + 1) as f64 / (n + 2) as f64)
        .collect())
}
