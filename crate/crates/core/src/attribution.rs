//! Attribution read directly off the routing state.
//!
//! A leaf's attribution is the product of the router weights along its
//! root-to-leaf route. The level-`k` attribution assigns each depth-`k` node
//! the product along the route to that node; summing leaves under a node
//! recovers its level mass.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{NodeId, Tree, WeightState};
use crate::metrics;

/// Per-leaf path products, in leaf order.
pub fn leaf_attribution(tree: &Tree, weights: &WeightState) -> Vec<f64> {
    (0..tree.n_leaves())
        .map(|j| {
            tree.route(j)
                .iter()
                .map(|s| weights.router(s.router)[s.child])
                .product()
        })
        .collect()
}

/// Mass of a single node: the product of weights on the route to it.
pub fn node_mass(tree: &Tree, weights: &WeightState, node: NodeId) -> f64 {
    tree.route_to_node(node)
        .iter()
        .map(|s| weights.router(s.router)[s.child])
        .product()
}

/// Distribution over the level-`k` frontier, `1 <= k <= depth`.
///
/// In trees whose leaves all sit at depth `>= k` the frontier is exactly the
/// set of depth-`k` nodes. Leaves that end above depth `k` carry their own
/// mass down so that every level remains a distribution.
pub fn level_attribution(tree: &Tree, weights: &WeightState, k: usize) -> Result<Vec<(NodeId, f64)>> {
    let depth = tree.depth();
    if k == 0 || k > depth {
        return Err(Error::LevelOutOfRange { level: k, depth });
    }
    Ok(tree
        .frontier(k)
        .into_iter()
        .map(|n| (n, node_mass(tree, weights, n)))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelledMass {
    pub label: String,
    pub mass: f64,
}

/// Leaf vector, every level distribution, and the annotated tree for one
/// weight state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub round: u64,
    pub leaf: Vec<LabelledMass>,
    /// `levels[k - 1]` is the level-`k` distribution.
    pub levels: Vec<Vec<LabelledMass>>,
    /// Router label to its weight vector.
    pub routers: BTreeMap<String, Vec<f64>>,
}

impl AttributionResult {
    pub fn extract(tree: &Tree, weights: &WeightState) -> Self {
        let leaf = leaf_attribution(tree, weights)
            .into_iter()
            .zip(tree.leaf_labels())
            .map(|(mass, label)| LabelledMass { label, mass })
            .collect();
        let levels = (1..=tree.depth())
            .map(|k| {
                level_attribution(tree, weights, k)
                    .expect("level within depth")
                    .into_iter()
                    .map(|(n, mass)| LabelledMass {
                        label: tree.label(n).to_string(),
                        mass,
                    })
                    .collect()
            })
            .collect();
        let routers = tree
            .routers()
            .iter()
            .enumerate()
            .map(|(slot, &r)| (tree.label(r).to_string(), weights.router(slot).to_vec()))
            .collect();
        AttributionResult {
            round: weights.round,
            leaf,
            levels,
            routers,
        }
    }

    pub fn leaf_masses(&self) -> Vec<f64> {
        self.leaf.iter().map(|m| m.mass).collect()
    }
}

/// Closed-form single-router equilibrium.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub weights: Vec<f64>,
    pub c: f64,
    /// The interiority condition `min p > (sum p - 1) / (b - 1)` holds.
    pub interior: bool,
}

impl EquilibriumResult {
    /// All entries strictly positive (only guaranteed when interior).
    pub fn on_simplex(&self) -> bool {
        self.weights.iter().all(|&w| w > 0.0)
    }
}

/// Equilibrium weights `w_i = (p_i + c) / (1 + c)` with
/// `c = (1 - sum p) / (b - 1)`.
///
/// The vector is returned even when the interiority condition fails so it can
/// be inspected; in that case some entry is `<= 0`.
pub fn equilibrium_weights(p: &[f64]) -> Result<EquilibriumResult> {
    let b = p.len();
    if b < 2 {
        return Err(Error::InvalidSpec(format!(
            "equilibrium needs at least 2 children, got {b}"
        )));
    }
    if let Some((index, &value)) = p.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidQuality { index, value });
    }
    let sum: f64 = p.iter().sum();
    let c = (1.0 - sum) / (b - 1) as f64;
    if 1.0 + c <= 0.0 {
        // only when every p_i = 1: the fixed point is not unique
        return Err(Error::NumericalGuard(
            "all child qualities equal 1; equilibrium is undefined".into(),
        ));
    }
    let min = p.iter().copied().fold(f64::INFINITY, f64::min);
    let interior = min > (sum - 1.0) / (b - 1) as f64;
    Ok(EquilibriumResult {
        weights: p.iter().map(|&pi| (pi + c) / (1.0 + c)).collect(),
        c,
        interior,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuppressionCheck {
    pub router: String,
    pub worst_child: String,
    pub worst_quality: f64,
    pub mean_quality: f64,
    pub weight: f64,
    pub uniform: f64,
    /// Worst child is strictly below the router's mean child quality.
    pub below_mean: bool,
    /// Worst child holds strictly less than `1 / b` of the router's mass.
    pub suppressed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub efficiency_residual: f64,
    /// Kendall tau-b between leaf quality and leaf attribution.
    pub monotonicity_tau: Option<f64>,
    /// Largest `|w_i - w_j|` over sibling pairs with equal quality.
    pub symmetry_max_deviation: f64,
    pub symmetric_pairs: usize,
    /// Largest `|w_i - 1/b|` over all routers.
    pub max_deviation_from_uniform: f64,
    pub suppression: Vec<SuppressionCheck>,
    pub worst_leaf: String,
    pub worst_leaf_attribution: f64,
}

/// Tolerance for treating two configured qualities as equal.
pub const EQUAL_QUALITY_TOL: f64 = 1e-9;

/// Quality of each child of router `slot`: the leaf quality for leaves, the
/// mean leaf quality of the subtree for routers.
pub fn child_qualities(tree: &Tree, qualities: &[f64], slot: usize) -> Vec<f64> {
    tree.children(tree.router(slot))
        .iter()
        .map(|&c| {
            let leaves = tree.subtree_leaves(c);
            leaves.iter().map(|&j| qualities[j]).sum::<f64>() / leaves.len() as f64
        })
        .collect()
}

/// Finite-sample checks of efficiency, monotonicity, symmetry and weak
/// suppression for one weight state.
pub fn property_suite(tree: &Tree, qualities: &[f64], weights: &WeightState) -> Result<PropertyReport> {
    if qualities.len() != tree.n_leaves() {
        return Err(Error::ShapeMismatch(format!(
            "{} qualities for {} leaves",
            qualities.len(),
            tree.n_leaves()
        )));
    }
    weights.validate(tree, 1e-9)?;
    let leaf = leaf_attribution(tree, weights);
    let efficiency_residual = (leaf.iter().sum::<f64>() - 1.0).abs();
    let monotonicity_tau = metrics::kendall_tau(qualities, &leaf).ok().map(|r| r.tau);

    let mut symmetry_max_deviation: f64 = 0.0;
    let mut symmetric_pairs = 0;
    let mut max_dev_uniform: f64 = 0.0;
    let mut suppression = Vec::new();
    for slot in 0..tree.n_routers() {
        let w = weights.router(slot);
        let q = child_qualities(tree, qualities, slot);
        let b = w.len();
        let uniform = 1.0 / b as f64;
        for i in 0..b {
            max_dev_uniform = max_dev_uniform.max((w[i] - uniform).abs());
            for j in i + 1..b {
                if (q[i] - q[j]).abs() <= EQUAL_QUALITY_TOL {
                    symmetric_pairs += 1;
                    symmetry_max_deviation = symmetry_max_deviation.max((w[i] - w[j]).abs());
                }
            }
        }
        let worst = (0..b)
            .min_by(|&a, &c| q[a].total_cmp(&q[c]).then(a.cmp(&c)))
            .expect("router has children");
        let mean_quality = q.iter().sum::<f64>() / b as f64;
        let node = tree.children(tree.router(slot))[worst];
        suppression.push(SuppressionCheck {
            router: tree.label(tree.router(slot)).to_string(),
            worst_child: tree.label(node).to_string(),
            worst_quality: q[worst],
            mean_quality,
            weight: w[worst],
            uniform,
            below_mean: q[worst] < mean_quality - EQUAL_QUALITY_TOL,
            suppressed: w[worst] < uniform,
        });
    }
    let worst_leaf = (0..leaf.len())
        .min_by(|&a, &b| qualities[a].total_cmp(&qualities[b]).then(a.cmp(&b)))
        .expect("tree has leaves");

    Ok(PropertyReport {
        efficiency_residual,
        monotonicity_tau,
        symmetry_max_deviation,
        symmetric_pairs,
        max_deviation_from_uniform: max_dev_uniform,
        suppression,
        worst_leaf: tree.label(tree.leaf(worst_leaf)).to_string(),
        worst_leaf_attribution: leaf[worst_leaf],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{HierarchySpec, SpecNode};
    use proptest::prelude::*;
    use rand::Rng;

    fn two_by_two() -> (Tree, WeightState) {
        let tree = Tree::balanced(&[2, 2]).unwrap();
        let mut w = WeightState::uniform(&tree);
        w.weights[0] = vec![0.6, 0.4];
        w.weights[1] = vec![0.5, 0.5];
        w.weights[2] = vec![0.9, 0.1];
        (tree, w)
    }

    #[test]
    fn leaf_products_by_hand() {
        let (tree, w) = two_by_two();
        let a = leaf_attribution(&tree, &w);
        let expected = [0.30, 0.30, 0.36, 0.04];
        for (x, y) in a.iter().zip(expected) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn depth_one_attribution_is_root_weights() {
        let tree = Tree::balanced(&[3]).unwrap();
        let mut w = WeightState::uniform(&tree);
        w.weights[0] = vec![0.2, 0.5, 0.3];
        assert_eq!(leaf_attribution(&tree, &w), vec![0.2, 0.5, 0.3]);
    }

    #[test]
    fn uniform_balanced_is_flat() {
        let tree = Tree::balanced(&[3, 3]).unwrap();
        let a = leaf_attribution(&tree, &WeightState::uniform(&tree));
        assert!(a.iter().all(|&x| (x - 1.0 / 9.0).abs() < 1e-15));
    }

    #[test]
    fn levels() {
        let (tree, w) = two_by_two();
        let l1 = level_attribution(&tree, &w, 1).unwrap();
        assert_eq!(l1.iter().map(|x| x.1).collect::<Vec<_>>(), vec![0.6, 0.4]);
        let l2: Vec<f64> = level_attribution(&tree, &w, 2).unwrap().iter().map(|x| x.1).collect();
        assert_eq!(l2, leaf_attribution(&tree, &w));
        assert!(matches!(
            level_attribution(&tree, &w, 0),
            Err(Error::LevelOutOfRange { .. })
        ));
        assert!(matches!(
            level_attribution(&tree, &w, 3),
            Err(Error::LevelOutOfRange { .. })
        ));
    }

    #[test]
    fn four_level_tree_gives_four_distributions() {
        let tree = Tree::balanced(&[2, 3, 2, 2]).unwrap();
        let res = AttributionResult::extract(&tree, &WeightState::uniform(&tree));
        assert_eq!(res.levels.len(), 4);
        assert_eq!(
            res.levels.iter().map(|l| l.len()).collect::<Vec<_>>(),
            vec![2, 6, 12, 24]
        );
        for l in &res.levels {
            assert!((l.iter().map(|m| m.mass).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shallow_leaves_carry_mass_down() {
        let spec = HierarchySpec {
            root: SpecNode::group(
                "root",
                vec![
                    SpecNode::leaf("s"),
                    SpecNode::group("G", vec![SpecNode::leaf("a"), SpecNode::leaf("b")]),
                ],
            ),
        };
        let tree = Tree::from_spec(&spec).unwrap();
        let mut w = WeightState::uniform(&tree);
        w.weights[0] = vec![0.3, 0.7];
        w.weights[1] = vec![0.25, 0.75];
        let l2 = level_attribution(&tree, &w, 2).unwrap();
        let masses: Vec<f64> = l2.iter().map(|x| x.1).collect();
        assert_eq!(masses.len(), 3);
        assert!((masses[0] - 0.3).abs() < 1e-15 && (masses[2] - 0.525).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_examples() {
        let e = equilibrium_weights(&[0.6, 0.5, 0.4]).unwrap();
        assert!((e.c + 0.25).abs() < 1e-15);
        for (x, y) in e.weights.iter().zip([0.35 / 0.75, 0.25 / 0.75, 0.15 / 0.75]) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(e.interior && e.on_simplex());

        let e = equilibrium_weights(&[0.5, 0.5]).unwrap();
        assert_eq!(e.weights, vec![0.5, 0.5]);

        let e = equilibrium_weights(&[0.9, 0.5, 0.3]).unwrap();
        assert!(!e.interior);
        assert!(!e.on_simplex());

        assert!(equilibrium_weights(&[0.5]).is_err());
        assert!(equilibrium_weights(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn cross_branch_order_can_invert() {
        // A = (0.9, 0.9), B = (0.8, 0.1): L3 outranks L1 unless the root
        // favours A by more than w3 / 0.5.
        let tree = Tree::balanced(&[2, 2]).unwrap();
        let a = equilibrium_weights(&[0.9, 0.9]).unwrap().weights;
        let b = equilibrium_weights(&[0.8, 0.1]).unwrap().weights;
        assert_eq!(a, vec![0.5, 0.5]);
        assert!(b[0] > 0.8);
        let ratio = b[0] / a[0];
        assert!((1.6..1.7).contains(&ratio));

        let mut w = WeightState::uniform(&tree);
        w.weights[1] = a;
        w.weights[2] = b;
        for (root, inverted) in [(vec![0.6, 0.4], true), (vec![0.65, 0.35], false)] {
            w.weights[0] = root;
            let leaf = leaf_attribution(&tree, &w);
            assert_eq!(leaf[2] > leaf[0], inverted);
            assert!(leaf[2] > leaf[3]);
        }
    }

    #[test]
    fn property_suite_on_uniform_weights() {
        let tree = Tree::balanced(&[3, 3]).unwrap();
        let q = [0.9, 0.5, 0.3, 0.6, 0.6, 0.4, 0.2, 0.3, 0.1];
        let r = property_suite(&tree, &q, &WeightState::uniform(&tree)).unwrap();
        assert!(r.efficiency_residual < 1e-15);
        assert_eq!(r.symmetry_max_deviation, 0.0);
        assert_eq!(r.symmetric_pairs, 1);
        assert_eq!(r.worst_leaf, "leaf8");
        assert!(r.suppression.iter().all(|s| !s.suppressed));
        // uniform attribution has zero variance: tau undefined
        assert!(r.monotonicity_tau.is_none());
    }

    #[test]
    fn property_suite_on_equilibrium_weights() {
        let tree = Tree::balanced(&[3]).unwrap();
        let q = [0.6, 0.5, 0.4];
        let mut w = WeightState::uniform(&tree);
        w.weights[0] = equilibrium_weights(&q).unwrap().weights;
        let r = property_suite(&tree, &q, &w).unwrap();
        assert!((r.monotonicity_tau.unwrap() - 1.0).abs() < 1e-12);
        let s = &r.suppression[0];
        assert!(s.below_mean && s.suppressed);
    }

    proptest! {
        #[test]
        fn efficiency_and_level_consistency(branching in prop::collection::vec(2usize..4, 1..4), seed in any::<u64>()) {
            let tree = Tree::balanced(&branching).unwrap();
            let mut rng = crate::rng::stream(seed, 0);
            let mut w = WeightState::uniform(&tree);
            for v in &mut w.weights {
                for x in v.iter_mut() {
                    *x = rng.random::<f64>() + 1e-3;
                }
                let s: f64 = v.iter().sum();
                v.iter_mut().for_each(|x| *x /= s);
            }
            let leaf = leaf_attribution(&tree, &w);
            prop_assert!((leaf.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for k in 1..=tree.depth() {
                let level = level_attribution(&tree, &w, k).unwrap();
                prop_assert!((level.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-9);
                for (node, mass) in level {
                    let sub: f64 = tree.subtree_leaves(node).iter().map(|&j| leaf[j]).sum();
                    prop_assert!((sub - mass).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn interior_equilibria_are_order_isomorphic(p in prop::collection::vec(0.0f64..1.0, 2..7)) {
            let e = equilibrium_weights(&p).unwrap();
            if e.interior {
                prop_assert!(e.on_simplex());
                prop_assert!((e.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for i in 0..p.len() {
                    for j in 0..p.len() {
                        if p[i] > p[j] {
                            prop_assert!(e.weights[i] > e.weights[j]);
                        }
                    }
                }
            }
        }
    }
}
