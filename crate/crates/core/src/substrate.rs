//! The adaptive routing substrate.
//!
//! Each round cascades an epsilon-exploring categorical choice from the root
//! to a leaf, observes a binary outcome, and redistributes weight along the
//! selected path. The root update is driven by the outcome; every deeper
//! router is driven by the sign of the change its parent just made to the
//! weight pointing at it. Only routers on the selected path are touched.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{QualityVector, Step, Tree, WeightState, SIMPLEX_TOL};
use crate::matrix::PassMatrix;
use crate::rng::{self, SimRng};

/// Tolerance under which a child holding all of a router's mass is treated as
/// the degenerate `w_i = 1` case of the negative update.
pub const SOLE_MASS_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubstrateConfig {
    pub eta: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub rounds: u64,
}

impl Default for SubstrateConfig {
    fn default() -> Self {
        SubstrateConfig {
            eta: 0.05,
            epsilon: 0.05,
            seed: 0,
            rounds: 1,
        }
    }
}

impl SubstrateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidConfig(format!("eta {} outside (0, 1)", self.eta)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidConfig(format!("epsilon {} outside [0, 1)", self.epsilon)));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_rounds(mut self, rounds: u64) -> Self {
        self.rounds = rounds;
        self
    }
}

/// Positive redistribution: move mass toward child `i` at rate `eta`.
pub fn redistribute_positive(w: &[f64], i: usize, eta: f64) -> Result<Vec<f64>> {
    let mut out = w.to_vec();
    redistribute_positive_in_place(&mut out, i, eta)?;
    Ok(out)
}

/// Negative redistribution: scale child `i` by `1 - eta` and hand the freed
/// mass to its siblings in proportion to their current weights.
///
/// When `w_i` holds all the mass (within [`SOLE_MASS_TOL`]) there is no
/// sibling mass to scale, so the update is skipped with a warning.
pub fn redistribute_negative(w: &[f64], i: usize, eta: f64) -> Result<Vec<f64>> {
    let mut out = w.to_vec();
    redistribute_negative_in_place(&mut out, i, eta)?;
    Ok(out)
}

pub(crate) fn redistribute_positive_in_place(w: &mut [f64], i: usize, eta: f64) -> Result<()> {
    if i >= w.len() {
        return Err(Error::IndexOutOfRange { index: i, len: w.len() });
    }
    let before: f64 = w.iter().sum();
    for x in w.iter_mut() {
        *x *= 1.0 - eta;
    }
    w[i] += eta;
    absorb_rounding(w, before);
    Ok(())
}

/// Returns `false` when the sole-mass guard skipped the update.
pub(crate) fn redistribute_negative_in_place(w: &mut [f64], i: usize, eta: f64) -> Result<bool> {
    if i >= w.len() {
        return Err(Error::IndexOutOfRange { index: i, len: w.len() });
    }
    let wi = w[i];
    if 1.0 - wi <= SOLE_MASS_TOL {
        log::warn!("negative update skipped: child {i} holds all router mass (w = {wi})");
        return Ok(false);
    }
    let before: f64 = w.iter().sum();
    let factor = (1.0 - wi + eta * wi) / (1.0 - wi);
    for (j, x) in w.iter_mut().enumerate() {
        if j != i {
            *x *= factor;
        }
    }
    w[i] = (1.0 - eta) * wi;
    absorb_rounding(w, before);
    Ok(true)
}

/// Fold the floating-point residual of an update into the largest entry so
/// the sum is unchanged to within an ulp.
fn absorb_rounding(w: &mut [f64], target: f64) {
    let residual = target - w.iter().sum::<f64>();
    if residual != 0.0 {
        let k = (0..w.len())
            .max_by(|&a, &b| w[a].total_cmp(&w[b]))
            .expect("non-empty router");
        w[k] += residual;
    }
}

fn renormalize_if_drifted(w: &mut [f64]) {
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        for x in w.iter_mut() {
            *x /= sum;
        }
    }
}

/// Result of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub path: Vec<Step>,
    pub leaf: usize,
    pub explored: Vec<bool>,
}

/// Forward pass: from the root, pick a child uniformly with probability
/// `epsilon`, otherwise from the router's weights, until a leaf is reached.
pub fn select_path(tree: &Tree, weights: &WeightState, epsilon: f64, rng: &mut SimRng) -> Selection {
    let mut node = tree.root();
    let mut path = Vec::with_capacity(tree.depth());
    let mut explored = Vec::with_capacity(tree.depth());
    while let Some(slot) = tree.router_index(node) {
        let w = weights.router(slot);
        let explore = rng.random::<f64>() < epsilon;
        let child = if explore {
            rng.random_range(0..w.len())
        } else {
            categorical(w, rng)
        };
        path.push(Step { router: slot, child });
        explored.push(explore);
        node = tree.children(node)[child];
    }
    Selection {
        path,
        leaf: tree.leaf_index(node).expect("walk ends at a leaf"),
        explored,
    }
}

fn categorical(w: &[f64], rng: &mut SimRng) -> usize {
    let u: f64 = rng.random::<f64>() * w.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, &x) in w.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the last cumulative sum
    w.iter().rposition(|&x| x > 0.0).unwrap_or(w.len() - 1)
}

/// Backward pass over a selected path. Returns the backward signal for each
/// level below the root (`delta[l - 1]` belongs to path level `l`).
pub fn backward_pass(weights: &mut WeightState, path: &[Step], outcome: bool, eta: f64) -> Vec<f64> {
    let mut deltas = Vec::with_capacity(path.len().saturating_sub(1));
    let Some(root) = path.first() else {
        return deltas;
    };
    let mut prev = weights.weights[root.router][root.child];
    apply(weights, *root, outcome, eta);
    let mut post = weights.weights[root.router][root.child];

    for step in &path[1..] {
        let delta = post - prev;
        deltas.push(delta);
        prev = weights.weights[step.router][step.child];
        if delta > 0.0 {
            apply(weights, *step, true, eta);
        } else if delta < 0.0 {
            apply(weights, *step, false, eta);
        }
        post = weights.weights[step.router][step.child];
    }
    deltas
}

fn apply(weights: &mut WeightState, step: Step, positive: bool, eta: f64) {
    let w = &mut weights.weights[step.router];
    if positive {
        redistribute_positive_in_place(w, step.child, eta).expect("child index from a valid path");
    } else {
        redistribute_negative_in_place(w, step.child, eta).expect("child index from a valid path");
    }
    renormalize_if_drifted(w);
}

/// Source of binary outcomes for the selected leaf.
#[derive(Clone, Debug)]
pub enum OutcomeProvider {
    /// Stationary Bernoulli outcomes with per-leaf success probability.
    Bernoulli(QualityVector),
    /// Replay a pass matrix: each round consumes the next problem of a
    /// shuffled order; `columns[j]` is the matrix column of leaf `j`.
    /// A fresh order is drawn whenever the previous one is exhausted.
    MatrixReplay {
        matrix: Arc<PassMatrix>,
        columns: Vec<usize>,
    },
    /// Flip the inner outcome with probability `flip`.
    Noisy { inner: Box<OutcomeProvider>, flip: f64 },
    /// Piecewise schedule: `phases[k] = (start round, provider)`; the first
    /// phase must start at round 0.
    Scheduled { phases: Vec<(u64, OutcomeProvider)> },
    /// Contexts cycle round-robin (`round % contexts.len()`), each with its
    /// own qualities. Running one context alone is the partition-and-rerun
    /// protocol; running them interleaved gives the context-agnostic view.
    Contextual { contexts: Vec<QualityVector> },
    /// Replay a recorded deployment: round `t` uses record `t mod len`. If the
    /// selected leaf is the recorded pick, the recorded outcome is observed;
    /// otherwise the leaf is scored as Bernoulli with `fallback` quality.
    TraceReplay {
        records: Arc<Vec<(usize, bool)>>,
        fallback: QualityVector,
    },
}

impl OutcomeProvider {
    pub fn replay(matrix: Arc<PassMatrix>, tree: &Tree) -> Result<Self> {
        let columns = matrix.columns_for(&tree.leaf_labels())?;
        Ok(OutcomeProvider::MatrixReplay { matrix, columns })
    }

    pub fn noisy(inner: OutcomeProvider, flip: f64) -> Self {
        OutcomeProvider::Noisy {
            inner: Box::new(inner),
            flip,
        }
    }

    /// Check the provider against the tree it will drive.
    pub fn validate(&self, n_leaves: usize) -> Result<()> {
        let check_len = |len: usize, what: &str| {
            if len != n_leaves {
                Err(Error::ShapeMismatch(format!(
                    "{what} covers {len} leaves, tree has {n_leaves}"
                )))
            } else {
                Ok(())
            }
        };
        match self {
            OutcomeProvider::Bernoulli(q) => check_len(q.len(), "quality vector"),
            OutcomeProvider::MatrixReplay { matrix, columns } => {
                check_len(columns.len(), "column map")?;
                if matrix.n_problems() == 0 {
                    return Err(Error::ShapeMismatch("pass matrix has no problems".into()));
                }
                if let Some(&c) = columns.iter().find(|&&c| c >= matrix.n_components()) {
                    return Err(Error::IndexOutOfRange {
                        index: c,
                        len: matrix.n_components(),
                    });
                }
                Ok(())
            }
            OutcomeProvider::Noisy { inner, flip } => {
                if !(0.0..=0.5).contains(flip) {
                    return Err(Error::InvalidConfig(format!(
                        "flip probability {flip} outside [0, 0.5]"
                    )));
                }
                inner.validate(n_leaves)
            }
            OutcomeProvider::Scheduled { phases } => {
                if phases.first().map(|p| p.0) != Some(0) {
                    return Err(Error::InvalidConfig("schedule must start at round 0".into()));
                }
                if phases.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::InvalidConfig("switch rounds must be strictly increasing".into()));
                }
                phases.iter().try_for_each(|(_, p)| p.validate(n_leaves))
            }
            OutcomeProvider::Contextual { contexts } => {
                if contexts.is_empty() {
                    return Err(Error::InvalidConfig("no contexts".into()));
                }
                contexts
                    .iter()
                    .try_for_each(|q| check_len(q.len(), "context quality vector"))
            }
            OutcomeProvider::TraceReplay { records, fallback } => {
                check_len(fallback.len(), "fallback quality vector")?;
                if records.is_empty() {
                    return Err(Error::EmptyTrace);
                }
                if let Some(&(leaf, _)) = records.iter().find(|r| r.0 >= n_leaves) {
                    return Err(Error::IndexOutOfRange {
                        index: leaf,
                        len: n_leaves,
                    });
                }
                Ok(())
            }
        }
    }

    /// Stationary success probability of each leaf, where one exists.
    pub fn expected_quality(&self) -> Option<Vec<f64>> {
        match self {
            OutcomeProvider::Bernoulli(q) => Some(q.as_slice().to_vec()),
            OutcomeProvider::MatrixReplay { matrix, columns } => {
                let rates = matrix.pass_rates();
                Some(columns.iter().map(|&c| rates[c]).collect())
            }
            OutcomeProvider::Noisy { inner, flip } => inner
                .expected_quality()
                .map(|q| q.into_iter().map(|p| p * (1.0 - flip) + (1.0 - p) * flip).collect()),
            OutcomeProvider::Contextual { contexts } => {
                let n = contexts[0].len();
                Some(
                    (0..n)
                        .map(|j| contexts.iter().map(|q| q.get(j)).sum::<f64>() / contexts.len() as f64)
                        .collect(),
                )
            }
            OutcomeProvider::Scheduled { .. } | OutcomeProvider::TraceReplay { .. } => None,
        }
    }
}

/// Mutable per-run state of a provider.
#[derive(Debug)]
pub struct ProviderState<'a> {
    spec: &'a OutcomeProvider,
    kind: StateKind<'a>,
}

#[derive(Debug)]
enum StateKind<'a> {
    Stateless,
    Replay { order: Vec<usize>, cursor: usize },
    Noisy(Box<ProviderState<'a>>),
    Scheduled(Vec<ProviderState<'a>>),
}

impl<'a> ProviderState<'a> {
    pub fn new(spec: &'a OutcomeProvider) -> Self {
        let kind = match spec {
            OutcomeProvider::MatrixReplay { .. } => StateKind::Replay {
                order: Vec::new(),
                cursor: 0,
            },
            OutcomeProvider::Noisy { inner, .. } => StateKind::Noisy(Box::new(ProviderState::new(inner))),
            OutcomeProvider::Scheduled { phases } => {
                StateKind::Scheduled(phases.iter().map(|(_, p)| ProviderState::new(p)).collect())
            }
            _ => StateKind::Stateless,
        };
        ProviderState { spec, kind }
    }

    /// Outcome for `leaf` in `round`.
    pub fn observe(&mut self, round: u64, leaf: usize, rng: &mut SimRng) -> bool {
        match (self.spec, &mut self.kind) {
            (OutcomeProvider::Bernoulli(q), _) => rng.random::<f64>() < q.get(leaf),
            (OutcomeProvider::MatrixReplay { matrix, columns }, StateKind::Replay { order, cursor }) => {
                if *cursor >= order.len() {
                    order.clear();
                    order.extend(0..matrix.n_problems());
                    order.shuffle(rng);
                    *cursor = 0;
                }
                let problem = order[*cursor];
                *cursor += 1;
                matrix.passes(problem, columns[leaf])
            }
            (OutcomeProvider::Noisy { flip, .. }, StateKind::Noisy(inner)) => {
                let o = inner.observe(round, leaf, rng);
                let flipped = rng.random::<f64>() < *flip;
                o ^ flipped
            }
            (OutcomeProvider::Scheduled { phases }, StateKind::Scheduled(states)) => {
                let k = phases.partition_point(|(start, _)| *start <= round).saturating_sub(1);
                states[k].observe(round, leaf, rng)
            }
            (OutcomeProvider::Contextual { contexts }, _) => {
                let q = &contexts[(round % contexts.len() as u64) as usize];
                rng.random::<f64>() < q.get(leaf)
            }
            (OutcomeProvider::TraceReplay { records, fallback }, _) => {
                let (pick, outcome) = records[(round % records.len() as u64) as usize];
                if pick == leaf {
                    outcome
                } else {
                    rng.random::<f64>() < fallback.get(leaf)
                }
            }
            _ => unreachable!("provider state built from its own spec"),
        }
    }
}

/// One round of the substrate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub path: Vec<(usize, usize)>,
    pub leaf: usize,
    pub outcome: bool,
    pub delta: Vec<f64>,
    pub explored: Vec<bool>,
}

/// How much of the per-round trace a run keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "every")]
pub enum TraceRetention {
    Full,
    Every(u64),
    #[default]
    FinalOnly,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub retention: TraceRetention,
    /// Record a weight snapshot every `k` rounds (and after the last round).
    pub snapshot_every: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub weights: WeightState,
    pub trace: Vec<RoundRecord>,
    pub snapshots: Vec<WeightState>,
}

/// Run the substrate for `config.rounds` rounds from uniform weights.
pub fn run(tree: &Tree, provider: &OutcomeProvider, config: &SubstrateConfig) -> Result<RunOutput> {
    run_with(tree, provider, config, &RunOptions::default())
}

pub fn run_with(
    tree: &Tree,
    provider: &OutcomeProvider,
    config: &SubstrateConfig,
    options: &RunOptions,
) -> Result<RunOutput> {
    if options.snapshot_every == Some(0) || options.retention == TraceRetention::Every(0) {
        return Err(Error::InvalidConfig("sampling interval must be at least 1".into()));
    }
    let mut trace = Vec::new();
    let mut snapshots = Vec::new();
    let weights = run_observed(tree, provider, config, |round, sel, outcome, delta, weights| {
        let last = round == config.rounds;
        let keep = match options.retention {
            TraceRetention::Full => true,
            TraceRetention::Every(k) => round % k == 0 || last,
            TraceRetention::FinalOnly => last,
        };
        if keep {
            trace.push(RoundRecord {
                round,
                path: sel.path.iter().map(|s| (s.router, s.child)).collect(),
                leaf: sel.leaf,
                outcome,
                delta: delta.to_vec(),
                explored: sel.explored.clone(),
            });
        }
        if let Some(k) = options.snapshot_every {
            if round % k == 0 || last {
                snapshots.push(weights.clone());
            }
        }
    })?;
    Ok(RunOutput {
        weights,
        trace,
        snapshots,
    })
}

/// Run the substrate, calling `observe(round, selection, outcome, deltas,
/// weights)` after every update. Rounds are numbered from 1.
pub fn run_observed<F>(
    tree: &Tree,
    provider: &OutcomeProvider,
    config: &SubstrateConfig,
    mut observe: F,
) -> Result<WeightState>
where
    F: FnMut(u64, &Selection, bool, &[f64], &WeightState),
{
    config.validate()?;
    provider.validate(tree.n_leaves())?;
    let mut weights = WeightState::uniform(tree);
    let mut routing = rng::stream(config.seed, rng::ROUTING_STREAM);
    let mut outcomes = rng::stream(config.seed, rng::OUTCOME_STREAM);
    let mut state = ProviderState::new(provider);
    for t in 0..config.rounds {
        let sel = select_path(tree, &weights, config.epsilon, &mut routing);
        let outcome = state.observe(t, sel.leaf, &mut outcomes);
        let delta = backward_pass(&mut weights, &sel.path, outcome, config.eta);
        weights.round = t + 1;
        observe(t + 1, &sel, outcome, &delta, &weights);
    }
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::HierarchySpec;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn positive_update_examples() {
        let third = 1.0 / 3.0;
        let w = redistribute_positive(&[third; 3], 0, 0.05).unwrap();
        assert!(close(&w, &[0.95 * third + 0.05, 0.95 * third, 0.95 * third], 1e-15));
        assert!(close(&w, &[0.366667, 0.316667, 0.316667], 1e-6));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);

        let w = redistribute_positive(&[0.5, 0.3, 0.2], 1, 0.0).unwrap();
        assert_eq!(w, vec![0.5, 0.3, 0.2]);
        let w = redistribute_positive(&[0.5, 0.5], 0, 1.0).unwrap();
        assert_eq!(w, vec![1.0, 0.0]);
        assert!(matches!(
            redistribute_positive(&[0.5, 0.5], 2, 0.1),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn negative_update_examples() {
        let w = redistribute_negative(&[0.5, 0.5], 0, 0.05).unwrap();
        assert!(close(&w, &[0.475, 0.525], 1e-15));
        let w = redistribute_negative(&[0.6, 0.3, 0.1], 0, 0.1).unwrap();
        assert!(close(&w, &[0.54, 0.345, 0.115], 1e-15));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let w = redistribute_negative(&[0.6, 0.3, 0.1], 2, 0.0).unwrap();
        assert!(close(&w, &[0.6, 0.3, 0.1], 1e-15));
    }

    #[test]
    fn negative_update_sole_mass_guard() {
        let mut w = vec![1.0, 0.0, 0.0];
        assert!(!redistribute_negative_in_place(&mut w, 0, 0.05).unwrap());
        assert_eq!(w, vec![1.0, 0.0, 0.0]);
        let mut w = vec![1.0 - 1e-13, 1e-13];
        assert!(!redistribute_negative_in_place(&mut w, 0, 0.05).unwrap());
        let mut w = vec![1.0 - 1e-6, 1e-6];
        assert!(redistribute_negative_in_place(&mut w, 0, 0.05).unwrap());
    }

    #[test]
    fn full_exploration_is_uniform() {
        let tree = Tree::balanced(&[3]).unwrap();
        let mut w = WeightState::uniform(&tree);
        w.weights[0] = vec![0.98, 0.01, 0.01];
        let mut rng = rng::stream(3, 0);
        let mut counts = [0usize; 3];
        let n = 60_000;
        for _ in 0..n {
            let s = select_path(&tree, &w, 1.0 - 1e-15, &mut rng);
            counts[s.leaf] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.01);
        }
    }

    #[test]
    fn greedy_selection_follows_weights() {
        let tree = Tree::balanced(&[3]).unwrap();
        let mut w = WeightState::uniform(&tree);
        w.weights[0] = vec![0.9999, 0.00005, 0.00005];
        let mut rng = rng::stream(4, 0);
        let hits = (0..1000)
            .filter(|_| select_path(&tree, &w, 0.0, &mut rng).leaf == 0)
            .count();
        assert!(hits >= 995);

        w.weights[0] = vec![0.5, 0.3, 0.2];
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[select_path(&tree, &w, 0.0, &mut rng).leaf] += 1;
        }
        for (c, p) in counts.iter().zip([0.5, 0.3, 0.2]) {
            assert!((*c as f64 / n as f64 - p).abs() < 0.01);
        }
    }

    #[test]
    fn backward_signal_signs() {
        let tree = Tree::balanced(&[3, 3]).unwrap();
        let path = tree.route(4).to_vec();
        let mut w = WeightState::uniform(&tree);
        let deltas = backward_pass(&mut w, &path, true, 0.05);
        assert_eq!(deltas.len(), 1);
        assert!((deltas[0] - 0.05 * (1.0 - 1.0 / 3.0)).abs() < 1e-15);
        assert!(w.router(path[1].router)[path[1].child] > 1.0 / 3.0);

        let mut w = WeightState::uniform(&tree);
        let deltas = backward_pass(&mut w, &path, false, 0.05);
        assert!((deltas[0] + 0.05 / 3.0).abs() < 1e-15);
        assert!(w.router(path[1].router)[path[1].child] < 1.0 / 3.0);
        // routers off the path are untouched
        assert_eq!(w.router(1), WeightState::uniform(&tree).router(1));
    }

    #[test]
    fn depth_one_backward_pass_has_no_signals() {
        let tree = Tree::balanced(&[4]).unwrap();
        let mut w = WeightState::uniform(&tree);
        let deltas = backward_pass(&mut w, tree.route(2), true, 0.05);
        assert!(deltas.is_empty());
        assert!(w.router(0)[2] > 0.25);
    }

    #[test]
    fn zero_rounds_leaves_weights_uniform() {
        let tree = Tree::balanced(&[3, 3]).unwrap();
        let q = QualityVector::for_tree(vec![0.5; 9], &tree).unwrap();
        let out = run(
            &tree,
            &OutcomeProvider::Bernoulli(q),
            &SubstrateConfig::default().with_rounds(0),
        )
        .unwrap();
        assert_eq!(out.weights, WeightState::uniform(&tree));
        assert!(out.trace.is_empty());
    }

    #[test]
    fn runs_are_deterministic() {
        let tree = Tree::balanced(&[3, 3]).unwrap();
        let q = QualityVector::for_tree(vec![0.9, 0.5, 0.3, 0.6, 0.6, 0.4, 0.2, 0.3, 0.1], &tree).unwrap();
        let p = OutcomeProvider::Bernoulli(q);
        let cfg = SubstrateConfig::default().with_rounds(2000).with_seed(11);
        let opts = RunOptions {
            retention: TraceRetention::Full,
            snapshot_every: Some(500),
        };
        let a = run_with(&tree, &p, &cfg, &opts).unwrap();
        let b = run_with(&tree, &p, &cfg, &opts).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.snapshots.len(), 4);
        let c = run(&tree, &p, &cfg.with_seed(12)).unwrap();
        assert_ne!(a.weights, c.weights);
    }

    #[test]
    fn thinned_retention() {
        let tree = Tree::balanced(&[2]).unwrap();
        let p = OutcomeProvider::Bernoulli(QualityVector::new(vec![0.7, 0.2]).unwrap());
        let opts = RunOptions {
            retention: TraceRetention::Every(10),
            snapshot_every: None,
        };
        let out = run_with(&tree, &p, &SubstrateConfig::default().with_rounds(95), &opts).unwrap();
        let rounds: Vec<u64> = out.trace.iter().map(|r| r.round).collect();
        assert_eq!(rounds, vec![10, 20, 30, 40, 50, 60, 70, 80, 90, 95]);
    }

    #[test]
    fn invalid_configs_rejected() {
        let tree = Tree::balanced(&[2]).unwrap();
        let p = OutcomeProvider::Bernoulli(QualityVector::new(vec![0.7, 0.2]).unwrap());
        for (eta, eps) in [(0.0, 0.05), (1.0, 0.05), (0.05, 1.0), (0.05, -0.1)] {
            let cfg = SubstrateConfig {
                eta,
                epsilon: eps,
                ..SubstrateConfig::default()
            };
            assert!(matches!(run(&tree, &p, &cfg), Err(Error::InvalidConfig(_))));
        }
        let short = OutcomeProvider::Bernoulli(QualityVector::new(vec![0.7]).unwrap());
        assert!(matches!(
            run(&tree, &short, &SubstrateConfig::default()),
            Err(Error::ShapeMismatch(_))
        ));
        let bad_noise = OutcomeProvider::noisy(p.clone(), 0.6);
        assert!(run(&tree, &bad_noise, &SubstrateConfig::default()).is_err());
        let bad_schedule = OutcomeProvider::Scheduled {
            phases: vec![(0, p.clone()), (0, p.clone())],
        };
        assert!(run(&tree, &bad_schedule, &SubstrateConfig::default()).is_err());
    }

    #[test]
    fn noisy_provider_contracts_quality() {
        let q = QualityVector::new(vec![0.9, 0.5, 0.1]).unwrap();
        let flip = 0.2;
        let provider = OutcomeProvider::noisy(OutcomeProvider::Bernoulli(q.clone()), flip);
        let mut state = ProviderState::new(&provider);
        let mut rng = rng::stream(5, rng::OUTCOME_STREAM);
        let n = 100_000;
        for leaf in 0..3 {
            let wins = (0..n).filter(|&t| state.observe(t, leaf, &mut rng)).count();
            let p = q.get(leaf);
            let expected = p * (1.0 - flip) + (1.0 - p) * flip;
            assert!((wins as f64 / n as f64 - expected).abs() < 0.01, "leaf {leaf}");
        }
        // gap between leaves shrinks by (1 - 2 flip)
        let eq = provider.expected_quality().unwrap();
        assert!(((eq[0] - eq[2]) - (1.0 - 2.0 * flip) * 0.8).abs() < 1e-12);
    }

    #[test]
    fn replay_consumes_each_problem_once_per_epoch() {
        let matrix = Arc::new(
            PassMatrix::from_rows(
                (0..5).map(|i| format!("p{i}")).collect(),
                vec!["a".into(), "b".into()],
                &[vec![1, 0], vec![1, 0], vec![0, 0], vec![1, 1], vec![0, 1]],
            )
            .unwrap(),
        );
        let tree = Tree::from_spec(&HierarchySpec::flat(&["a", "b"])).unwrap();
        let provider = OutcomeProvider::replay(matrix, &tree).unwrap();
        let mut state = ProviderState::new(&provider);
        let mut rng = rng::stream(0, rng::OUTCOME_STREAM);
        for epoch in 0..3 {
            let wins = (0..5).filter(|&t| state.observe(epoch * 5 + t, 0, &mut rng)).count();
            assert_eq!(wins, 3);
        }
    }

    #[test]
    fn scheduled_provider_switches() {
        let tree = Tree::balanced(&[2]).unwrap();
        let provider = OutcomeProvider::Scheduled {
            phases: vec![
                (
                    0,
                    OutcomeProvider::Bernoulli(QualityVector::new(vec![1.0, 0.0]).unwrap()),
                ),
                (
                    10,
                    OutcomeProvider::Bernoulli(QualityVector::new(vec![0.0, 1.0]).unwrap()),
                ),
            ],
        };
        provider.validate(tree.n_leaves()).unwrap();
        let mut state = ProviderState::new(&provider);
        let mut rng = rng::stream(0, 1);
        assert!(state.observe(9, 0, &mut rng));
        assert!(!state.observe(10, 0, &mut rng));
        assert!(state.observe(10, 1, &mut rng));
    }

    #[test]
    fn trace_replay_uses_recorded_outcome_on_match() {
        let provider = OutcomeProvider::TraceReplay {
            records: Arc::new(vec![(0, false), (1, true)]),
            fallback: QualityVector::new(vec![1.0, 0.0]).unwrap(),
        };
        let mut state = ProviderState::new(&provider);
        let mut rng = rng::stream(0, 1);
        assert!(!state.observe(0, 0, &mut rng));
        assert!(!state.observe(0, 1, &mut rng));
        assert!(state.observe(1, 1, &mut rng));
        assert!(state.observe(1, 0, &mut rng));
    }

    fn arb_simplex() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.001f64..1.0, 2..8).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn updates_preserve_simplex_and_move_monotonically(w in arb_simplex(), eta in 0.001f64..0.999, pick in 0usize..8) {
            let i = pick % w.len();
            let sum_before: f64 = w.iter().sum();
            let pos = redistribute_positive(&w, i, eta).unwrap();
            prop_assert!((pos.iter().sum::<f64>() - sum_before).abs() <= 1e-15 * 4.0);
            prop_assert!(pos[i] > w[i]);
            let neg = redistribute_negative(&w, i, eta).unwrap();
            prop_assert!((neg.iter().sum::<f64>() - sum_before).abs() <= 1e-15 * 4.0);
            prop_assert!(neg[i] < w[i]);
            prop_assert!(neg.iter().all(|&x| x > 0.0));
        }
    }
}
