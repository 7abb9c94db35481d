//! Rooted trees with variable branching and the routing weights that live on them.
//!
//! A [`Tree`] is immutable once built. Internal nodes are routers: each holds a
//! probability simplex over its children, stored separately in a
//! [`WeightState`] so that many runs can share one tree.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|sum - 1|` for a router simplex.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

/// One step of a root-to-leaf route: the router slot and the child index taken there.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Step {
    pub router: usize,
    pub child: usize,
}

/// Nested, labelled description of a hierarchy. Leaves have no children and
/// may carry a quality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecNode {
    pub label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<SpecNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<f64>,
}

impl SpecNode {
    pub fn leaf(label: impl Into<String>) -> Self {
        SpecNode {
            label: label.into(),
            children: Vec::new(),
            quality: None,
        }
    }

    pub fn leaf_with_quality(label: impl Into<String>, quality: f64) -> Self {
        SpecNode {
            quality: Some(quality),
            ..SpecNode::leaf(label)
        }
    }

    pub fn group(label: impl Into<String>, children: Vec<SpecNode>) -> Self {
        SpecNode {
            label: label.into(),
            children,
            quality: None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    fn mean_leaf_quality(&self) -> Option<f64> {
        let mut acc = (0.0, 0usize);
        self.fold_leaves(&mut |leaf| {
            if let Some(q) = leaf.quality {
                acc.0 += q;
                acc.1 += 1;
            }
        });
        (acc.1 > 0).then(|| acc.0 / acc.1 as f64)
    }

    fn fold_leaves(&self, f: &mut impl FnMut(&SpecNode)) {
        if self.is_leaf() {
            f(self);
        } else {
            for c in &self.children {
                c.fold_leaves(f);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchySpec {
    pub root: SpecNode,
}

impl HierarchySpec {
    /// A depth-1 hierarchy: one router over the given leaves.
    pub fn flat<S: AsRef<str>>(leaves: &[S]) -> Self {
        HierarchySpec {
            root: SpecNode::group("root", leaves.iter().map(|l| SpecNode::leaf(l.as_ref())).collect()),
        }
    }

    /// A depth-2 hierarchy from `(group label, leaf labels)` pairs.
    pub fn grouped<S: AsRef<str>>(groups: &[(&str, Vec<S>)]) -> Self {
        HierarchySpec {
            root: SpecNode::group(
                "root",
                groups
                    .iter()
                    .map(|(g, leaves)| SpecNode::group(*g, leaves.iter().map(|l| SpecNode::leaf(l.as_ref())).collect()))
                    .collect(),
            ),
        }
    }

    /// Leaf qualities in leaf order, if every leaf declares one.
    pub fn leaf_qualities(&self) -> Option<Vec<f64>> {
        let mut out = Vec::new();
        let mut complete = true;
        self.root.fold_leaves(&mut |leaf| match leaf.quality {
            Some(q) => out.push(q),
            None => complete = false,
        });
        complete.then_some(out)
    }

    /// Attach qualities to leaves in leaf order.
    pub fn with_qualities(mut self, qualities: &[f64]) -> Result<Self> {
        fn walk(node: &mut SpecNode, qs: &[f64], next: &mut usize) {
            if node.is_leaf() {
                node.quality = qs.get(*next).copied();
                *next += 1;
            } else {
                for c in &mut node.children {
                    walk(c, qs, next);
                }
            }
        }
        let mut next = 0;
        walk(&mut self.root, qualities, &mut next);
        if next != qualities.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} qualities for {} leaves",
                qualities.len(),
                next
            )));
        }
        Ok(self)
    }

    /// Keep at most `max` children per router, retaining the children with the
    /// highest mean leaf quality (ties keep the earlier child). Children
    /// without any quality information rank last.
    pub fn cap_branching(mut self, max: usize) -> Result<Self> {
        if max < 2 {
            return Err(Error::InvalidSpec(format!("max branching {max} is below 2")));
        }
        fn walk(node: &mut SpecNode, max: usize) {
            if node.children.len() > max {
                let mut ranked: Vec<(usize, f64)> = node
                    .children
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (i, c.mean_leaf_quality().unwrap_or(f64::NEG_INFINITY)))
                    .collect();
                ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                let mut keep: Vec<usize> = ranked[..max].iter().map(|r| r.0).collect();
                keep.sort_unstable();
                let old = std::mem::take(&mut node.children);
                node.children = old
                    .into_iter()
                    .enumerate()
                    .filter(|(i, _)| keep.binary_search(i).is_ok())
                    .map(|(_, c)| c)
                    .collect();
            }
            for c in &mut node.children {
                walk(c, max);
            }
        }
        walk(&mut self.root, max);
        Ok(self)
    }

    /// Collapse routers with a single child into that child. The child keeps
    /// its own label. A root with a single internal child is replaced by it.
    pub fn prune_unary(mut self) -> Self {
        fn walk(node: &mut SpecNode) {
            for c in &mut node.children {
                walk(c);
            }
            for c in &mut node.children {
                while c.children.len() == 1 {
                    let only = c.children.pop().expect("one child");
                    *c = only;
                }
            }
        }
        walk(&mut self.root);
        while self.root.children.len() == 1 && !self.root.children[0].is_leaf() {
            let only = self.root.children.pop().expect("one child");
            self.root = only;
        }
        self
    }
}

#[derive(Clone, Debug)]
struct Node {
    label: String,
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    depth: usize,
}

/// Immutable rooted tree. Node ids are assigned in preorder, so the root is
/// `NodeId(0)` and leaves appear left to right.
#[derive(Clone, Debug)]
pub struct Tree {
    nodes: Vec<Node>,
    leaves: Vec<NodeId>,
    routers: Vec<NodeId>,
    leaf_slot: Vec<Option<usize>>,
    router_slot: Vec<Option<usize>>,
    leaf_routes: Vec<Vec<Step>>,
    by_label: HashMap<String, NodeId>,
}

impl Tree {
    /// Balanced tree with the given per-level branching, e.g. `[3, 3]`.
    pub fn balanced(branching: &[usize]) -> Result<Tree> {
        Tree::from_spec(&balanced_spec(branching)?)
    }

    pub fn from_spec(spec: &HierarchySpec) -> Result<Tree> {
        if spec.root.is_leaf() {
            return Err(Error::InvalidSpec("root must have children".into()));
        }
        let mut tree = Tree {
            nodes: Vec::new(),
            leaves: Vec::new(),
            routers: Vec::new(),
            leaf_slot: Vec::new(),
            router_slot: Vec::new(),
            leaf_routes: Vec::new(),
            by_label: HashMap::new(),
        };
        let mut seen = HashSet::new();
        tree.insert(&spec.root, None, 0, &mut seen)?;

        tree.leaf_slot = vec![None; tree.nodes.len()];
        tree.router_slot = vec![None; tree.nodes.len()];
        for (id, node) in tree.nodes.iter().enumerate() {
            if node.children.is_empty() {
                tree.leaf_slot[id] = Some(tree.leaves.len());
                tree.leaves.push(NodeId(id));
            } else {
                tree.router_slot[id] = Some(tree.routers.len());
                tree.routers.push(NodeId(id));
            }
        }
        tree.leaf_routes = tree.leaves.iter().map(|&l| tree.route_to(l)).collect();
        Ok(tree)
    }

    fn insert(
        &mut self,
        spec: &SpecNode,
        parent: Option<NodeId>,
        depth: usize,
        seen: &mut HashSet<String>,
    ) -> Result<NodeId> {
        if spec.label.is_empty() {
            return Err(Error::InvalidSpec("empty label".into()));
        }
        if !seen.insert(spec.label.clone()) {
            return Err(Error::InvalidSpec(format!("duplicate label `{}`", spec.label)));
        }
        if spec.children.len() == 1 {
            return Err(Error::InvalidSpec(format!(
                "node `{}` has a single child; routers need at least two",
                spec.label
            )));
        }
        if !spec.is_leaf() && spec.quality.is_some() {
            return Err(Error::InvalidSpec(format!(
                "router `{}` declares a quality; only leaves may",
                spec.label
            )));
        }
        if let Some(q) = spec.quality {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::InvalidSpec(format!(
                    "leaf `{}` quality {q} outside [0, 1]",
                    spec.label
                )));
            }
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            label: spec.label.clone(),
            parent,
            children: Vec::with_capacity(spec.children.len()),
            depth,
        });
        self.by_label.insert(spec.label.clone(), id);
        for child in &spec.children {
            let c = self.insert(child, Some(id), depth + 1, seen)?;
            self.nodes[id.0].children.push(c);
        }
        Ok(id)
    }

    fn route_to(&self, node: NodeId) -> Vec<Step> {
        let mut steps = Vec::with_capacity(self.nodes[node.0].depth);
        let mut cur = node;
        while let Some(p) = self.nodes[cur.0].parent {
            let child = self.nodes[p.0]
                .children
                .iter()
                .position(|&c| c == cur)
                .expect("child listed under its parent");
            steps.push(Step {
                router: self.router_slot[p.0].expect("parent is a router"),
                child,
            });
            cur = p;
        }
        steps.reverse();
        steps
    }

    /// Serialize back into a spec (without qualities).
    pub fn to_spec(&self) -> HierarchySpec {
        fn build(tree: &Tree, id: NodeId) -> SpecNode {
            let node = &tree.nodes[id.0];
            SpecNode {
                label: node.label.clone(),
                children: node.children.iter().map(|&c| build(tree, c)).collect(),
                quality: None,
            }
        }
        HierarchySpec {
            root: build(self, self.root()),
        }
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn n_routers(&self) -> usize {
        self.routers.len()
    }

    /// Maximum leaf depth.
    pub fn depth(&self) -> usize {
        self.leaves.iter().map(|l| self.nodes[l.0].depth).max().unwrap_or(0)
    }

    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    pub fn routers(&self) -> &[NodeId] {
        &self.routers
    }

    pub fn leaf(&self, index: usize) -> NodeId {
        self.leaves[index]
    }

    pub fn router(&self, slot: usize) -> NodeId {
        self.routers[slot]
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.nodes[id.0].label
    }

    pub fn leaf_labels(&self) -> Vec<String> {
        self.leaves.iter().map(|&l| self.label(l).to_string()).collect()
    }

    pub fn router_labels(&self) -> Vec<String> {
        self.routers.iter().map(|&r| self.label(r).to_string()).collect()
    }

    pub fn find(&self, label: &str) -> Option<NodeId> {
        self.by_label.get(label).copied()
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.0].parent
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].children
    }

    pub fn node_depth(&self, id: NodeId) -> usize {
        self.nodes[id.0].depth
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id.0].children.is_empty()
    }

    pub fn leaf_index(&self, id: NodeId) -> Option<usize> {
        self.leaf_slot.get(id.0).copied().flatten()
    }

    pub fn router_index(&self, id: NodeId) -> Option<usize> {
        self.router_slot.get(id.0).copied().flatten()
    }

    /// Branching factor of the router in `slot`.
    pub fn branching(&self, slot: usize) -> usize {
        self.nodes[self.routers[slot].0].children.len()
    }

    /// Root-to-leaf route by leaf index, as router slots and child indices.
    pub fn route(&self, leaf: usize) -> &[Step] {
        &self.leaf_routes[leaf]
    }

    /// Root-to-node route for any node.
    pub fn route_to_node(&self, id: NodeId) -> Vec<Step> {
        self.route_to(id)
    }

    /// Ordered `(router, child index)` pairs from the root to `leaf`.
    pub fn path(&self, leaf: NodeId) -> Result<Vec<(NodeId, usize)>> {
        if leaf.0 >= self.nodes.len() {
            return Err(Error::IndexOutOfRange {
                index: leaf.0,
                len: self.nodes.len(),
            });
        }
        let slot = self
            .leaf_index(leaf)
            .ok_or_else(|| Error::NotALeaf(self.label(leaf).to_string()))?;
        Ok(self.leaf_routes[slot]
            .iter()
            .map(|s| (self.routers[s.router], s.child))
            .collect())
    }

    /// Nodes at exactly depth `k`, in preorder.
    pub fn nodes_at_depth(&self, k: usize) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].depth == k)
            .map(NodeId)
            .collect()
    }

    /// The level-`k` frontier: nodes at depth `k` plus leaves that end above
    /// depth `k`. Every leaf has exactly one frontier ancestor (or is one).
    pub fn frontier(&self, k: usize) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| {
                let n = &self.nodes[i];
                n.depth == k || (n.depth < k && n.children.is_empty())
            })
            .map(NodeId)
            .collect()
    }

    /// Leaf indices under `id` (the node itself when it is a leaf).
    pub fn subtree_leaves(&self, id: NodeId) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            if let Some(slot) = self.leaf_index(n) {
                out.push(slot);
            } else {
                stack.extend(self.nodes[n.0].children.iter().rev());
            }
        }
        out
    }

    /// Tree with leaves relabelled and placed according to `perm`: leaf
    /// position `i` of the result carries the label of leaf `perm[i]` of `self`.
    /// Routers keep their labels and shape.
    pub fn permute_leaves(&self, perm: &[usize]) -> Result<Tree> {
        if !is_permutation(perm, self.n_leaves()) {
            return Err(Error::InvalidSpec("leaf permutation is not a permutation".into()));
        }
        let labels = self.leaf_labels();
        let mut spec = self.to_spec();
        fn walk(node: &mut SpecNode, labels: &[String], perm: &[usize], next: &mut usize) {
            if node.is_leaf() {
                node.label = labels[perm[*next]].clone();
                *next += 1;
            } else {
                for c in &mut node.children {
                    walk(c, labels, perm, next);
                }
            }
        }
        let mut next = 0;
        walk(&mut spec.root, &labels, perm, &mut next);
        Tree::from_spec(&spec)
    }
}

pub(crate) fn is_permutation(perm: &[usize], n: usize) -> bool {
    if perm.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return false;
        }
        seen[p] = true;
    }
    true
}

/// Spec for a balanced tree. Routers are labelled `root`, `g0`, `g0.1`, ...
/// by child-index path; leaves are `leaf0`..`leaf{N-1}` left to right.
pub fn balanced_spec(branching: &[usize]) -> Result<HierarchySpec> {
    if branching.is_empty() {
        return Err(Error::InvalidSpec("branching list is empty".into()));
    }
    if let Some(b) = branching.iter().find(|&&b| b < 2) {
        return Err(Error::InvalidSpec(format!("branching factor {b} is below 2")));
    }
    fn build(branching: &[usize], prefix: &str, next_leaf: &mut usize) -> Vec<SpecNode> {
        let (&b, rest) = branching.split_first().expect("non-empty");
        (0..b)
            .map(|i| {
                if rest.is_empty() {
                    let node = SpecNode::leaf(format!("leaf{next_leaf}"));
                    *next_leaf += 1;
                    node
                } else {
                    let label = if prefix.is_empty() {
                        format!("g{i}")
                    } else {
                        format!("{prefix}.{i}")
                    };
                    let children = build(rest, &label, next_leaf);
                    SpecNode::group(label, children)
                }
            })
            .collect()
    }
    let mut next = 0;
    Ok(HierarchySpec {
        root: SpecNode::group("root", build(branching, "", &mut next)),
    })
}

/// Per-router weight simplices, indexed by router slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightState {
    pub weights: Vec<Vec<f64>>,
    pub round: u64,
}

impl WeightState {
    pub fn uniform(tree: &Tree) -> Self {
        WeightState {
            weights: (0..tree.n_routers())
                .map(|r| {
                    let b = tree.branching(r);
                    vec![1.0 / b as f64; b]
                })
                .collect(),
            round: 0,
        }
    }

    pub fn router(&self, slot: usize) -> &[f64] {
        &self.weights[slot]
    }

    /// Check shape against `tree` and the simplex invariant within `tol`.
    pub fn validate(&self, tree: &Tree, tol: f64) -> Result<()> {
        if self.weights.len() != tree.n_routers() {
            return Err(Error::ShapeMismatch(format!(
                "{} weight vectors for {} routers",
                self.weights.len(),
                tree.n_routers()
            )));
        }
        for (slot, w) in self.weights.iter().enumerate() {
            let label = tree.label(tree.router(slot));
            if w.len() != tree.branching(slot) {
                return Err(Error::ShapeMismatch(format!(
                    "router `{label}` has {} children but {} weights",
                    tree.branching(slot),
                    w.len()
                )));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > tol || w.iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::NumericalGuard(format!(
                    "router `{label}` weights are not on the simplex (sum {sum})"
                )));
            }
        }
        Ok(())
    }

    /// Element-wise mean of several weight states over the same tree.
    pub fn mean(states: &[WeightState]) -> Option<WeightState> {
        let first = states.first()?;
        let mut acc: Vec<Vec<f64>> = first.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        for s in states {
            for (a, w) in acc.iter_mut().zip(&s.weights) {
                for (x, y) in a.iter_mut().zip(w) {
                    *x += y;
                }
            }
        }
        let n = states.len() as f64;
        for a in &mut acc {
            for x in a.iter_mut() {
                *x /= n;
            }
        }
        Some(WeightState {
            weights: acc,
            round: first.round,
        })
    }
}

/// Per-leaf Bernoulli success probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QualityVector(Vec<f64>);

impl QualityVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidQuality { index, value });
        }
        Ok(QualityVector(values))
    }

    pub fn for_tree(values: Vec<f64>, tree: &Tree) -> Result<Self> {
        if values.len() != tree.n_leaves() {
            return Err(Error::ShapeMismatch(format!(
                "{} qualities for {} leaves",
                values.len(),
                tree.n_leaves()
            )));
        }
        QualityVector::new(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> f64 {
        self.0[j]
    }
}
