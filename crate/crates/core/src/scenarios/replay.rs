//! Scenario kinds driven by a pass matrix or a deployed trace.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    aggregate, point, run_seeds, tau_points, HierarchySource, MatrixSource, Produced, ScenarioConfig, ScenarioKind,
    ShapEstimator, ShapSpec, SubstrateParams, SweepRecord,
};
use crate::attribution::{leaf_attribution, level_attribution};
use crate::baselines::{
    online_winrate, shap_exact, shap_from_table, shap_permutation, winrate_baselines, ShapResult, SubsetValueTable,
    TierMass, WinRateInput, WinRateVariant, DEFAULT_EXACT_LIMIT,
};
use crate::dataio::{self, DeployedRoute, PlotPoint};
use crate::error::{Error, Result};
use crate::hierarchy::{HierarchySpec, QualityVector, Tree, WeightState};
use crate::matrix::PassMatrix;
use crate::metrics::{self, cell_diagnostic, mean_std, pruning_curve, CellDiagnostic, PruningReport};
use crate::rng;
use crate::substrate::{self, OutcomeProvider};

/// Flag attached to every cell-diagnostic report.
pub const REPLAY_NOTE: &str = "trace replay: when the substrate selects the deployed pick the recorded outcome is \
     observed; otherwise the selected tool is scored Bernoulli at its empirical pass rate in the trace";

pub(crate) fn run(config: &ScenarioConfig, base: &Path) -> Result<Produced> {
    let seeds = &config.seeds;
    let params = &config.substrate;
    match &config.kind {
        ScenarioKind::MatrixReplay {
            matrix,
            hierarchy,
            rounds,
            shap,
            winrate,
        } => {
            let (m, tree) = load(matrix, hierarchy.as_ref(), base)?;
            matrix_replay(&m, &tree, *rounds, shap, *winrate, seeds, params)
        }
        ScenarioKind::GroupingAblation {
            matrix,
            hierarchy,
            rounds,
            shuffles,
        } => {
            let (m, tree) = load(matrix, hierarchy.as_ref(), base)?;
            let mut rng = rng::stream(seeds[0], rng::SCENARIO_STREAM);
            let perms: Vec<Vec<usize>> = (0..*shuffles)
                .map(|_| {
                    let mut p: Vec<usize> = (0..tree.n_leaves()).collect();
                    p.shuffle(&mut rng);
                    p
                })
                .collect();
            let report = grouping_ablation(
                &m,
                &tree,
                &perms,
                rounds.unwrap_or(m.n_problems() as u64),
                seeds,
                params,
            )?;
            Ok(grouping_output(report))
        }
        ScenarioKind::Pruning {
            matrix,
            hierarchy,
            rounds,
            random,
            attribution,
        } => {
            let (m, tree) = load(matrix, hierarchy.as_ref(), base)?;
            pruning(&m, &tree, *rounds, *random, attribution.as_deref(), seeds, params, base)
        }
        ScenarioKind::CellDiagnostic {
            hierarchy,
            trace,
            subset_table,
            pass_rates,
            rounds,
            driver,
            benchmark,
        } => {
            let spec = hierarchy.load(base)?;
            let routes = dataio::read_deployed_trace(&base.join(trace))?;
            let table = dataio::read_subset_table(&base.join(subset_table))?;
            let rates = pass_rates
                .as_ref()
                .map(|p| dataio::read_quality_table(&base.join(p)))
                .transpose()?;
            let report = cell_pipeline(&routes, &table, &spec, rates.as_deref(), params, *rounds, seeds)?;
            Ok(cell_output(report, driver, benchmark))
        }
        _ => unreachable!("dispatched to synthetic"),
    }
}

fn load(matrix: &MatrixSource, hierarchy: Option<&HierarchySource>, base: &Path) -> Result<(PassMatrix, Tree)> {
    let (m, preset) = matrix.load(base)?;
    let spec = match (hierarchy, preset) {
        (Some(h), _) => h.load(base)?,
        (None, Some(spec)) => spec,
        (None, None) => return Err(Error::Scenario("a matrix file needs an explicit hierarchy".into())),
    };
    let tree = Tree::from_spec(&spec)?;
    m.columns_for(&tree.leaf_labels())?;
    Ok((m, tree))
}

fn leaf_rates(m: &PassMatrix, tree: &Tree) -> Result<Vec<f64>> {
    let rates = m.pass_rates();
    Ok(m.columns_for(&tree.leaf_labels())?
        .into_iter()
        .map(|c| rates[c])
        .collect())
}

/// Reorder a Shapley vector from matrix column order into leaf order.
fn phi_in_leaf_order(result: &ShapResult, tree: &Tree) -> Result<Vec<f64>> {
    tree.leaf_labels()
        .iter()
        .map(|l| {
            result
                .labels
                .iter()
                .position(|x| x == l)
                .map(|i| result.phi[i])
                .ok_or_else(|| Error::UnknownLabel(l.clone()))
        })
        .collect()
}

fn matrix_replay(
    m: &PassMatrix,
    tree: &Tree,
    rounds: Option<u64>,
    shap: &[ShapSpec],
    winrate: bool,
    seeds: &[u64],
    params: &SubstrateParams,
) -> Result<Produced> {
    let rounds = rounds.unwrap_or(m.n_problems() as u64);
    let provider = OutcomeProvider::replay(Arc::new(m.clone()), tree)?;
    let reference = leaf_rates(m, tree)?;
    let runs: Vec<(WeightState, Vec<(usize, bool)>)> = seeds
        .par_iter()
        .map(|&s| {
            let mut picks = Vec::new();
            let w = substrate::run_observed(tree, &provider, &params.config(s, rounds), |_, sel, outcome, _, _| {
                if winrate {
                    picks.push((sel.leaf, outcome));
                }
            })?;
            Ok((w, picks))
        })
        .collect::<Result<_>>()?;
    let weights: Vec<WeightState> = runs.iter().map(|r| r.0.clone()).collect();
    let mut rec = aggregate(tree, point([]), seeds, &weights, Some(&reference), rounds)?;
    rec.scalars.insert("problems".into(), m.n_problems() as f64);

    for spec in shap {
        let result = match spec.estimator {
            ShapEstimator::Exact => shap_exact(m, spec.kind, DEFAULT_EXACT_LIMIT)?,
            ShapEstimator::Permutation => shap_permutation(m, spec.kind, spec.permutations, spec.seed)?,
        };
        let phi = phi_in_leaf_order(&result, tree)?;
        let key = format!(
            "shap.{}.{}",
            spec.kind.name(),
            match spec.estimator {
                ShapEstimator::Exact => "exact",
                ShapEstimator::Permutation => "permutation",
            }
        );
        let s = &mut rec.scalars;
        if let Ok(t) = metrics::tau_b(&reference, &phi) {
            s.insert(format!("{key}.tau_vs_reference"), t);
        }
        if let Ok(t) = metrics::tau_b(&rec.mean_attribution, &phi) {
            s.insert(format!("{key}.tau_vs_attribution"), t);
        }
        s.insert(format!("{key}.evaluations"), result.evaluations as f64);
        s.insert(
            format!("{key}.evaluations_per_round"),
            result.evaluations as f64 / rounds as f64,
        );
        rec.shap.push(result);
    }

    if winrate {
        for variant in [
            WinRateVariant::Flat,
            WinRateVariant::Hierarchical,
            WinRateVariant::UniformWithinTier,
        ] {
            let input = WinRateInput::Matrix {
                matrix: m,
                tree,
                tier_mass: TierMass::default(),
            };
            let scores = winrate_baselines(input, variant)?;
            if let Ok(t) = metrics::tau_b(&reference, &scores) {
                rec.scalars.insert(format!("winrate.{variant}.tau"), t);
            }
        }
        let online: Vec<f64> = runs
            .iter()
            .filter_map(|r| online_winrate(&r.1, tree.n_leaves()).ok())
            .filter_map(|scores| metrics::tau_b(&reference, &scores).ok())
            .collect();
        if !online.is_empty() {
            rec.scalars.insert("winrate.online.tau".into(), mean_std(&online).0);
        }
    }
    Ok(Produced {
        plot: tau_points("tau", 0.0, &rec),
        records: vec![rec],
        notes: Vec::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    /// Per-seed tau, seed-major within each hierarchy.
    pub per_seed_tau: Vec<Option<f64>>,
    pub tau_mean: f64,
    pub tau_std: f64,
    /// Mean over hierarchies of the seed-averaged tau.
    pub tau_of_mean: f64,
    /// Mean over hierarchies of `max - min` seed-averaged level-1 mass.
    pub tier_spread: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupingReport {
    pub natural: ConditionSummary,
    pub shuffled: ConditionSummary,
    /// Fraction of seeds whose natural tau exceeds their tau averaged over
    /// the shuffles.
    pub paired_natural_wins: f64,
    pub rounds: u64,
    pub shuffles: usize,
}

/// Per-seed tau and tier spread of one hierarchy.
fn condition(
    m: &PassMatrix,
    tree: &Tree,
    rounds: u64,
    seeds: &[u64],
    params: &SubstrateParams,
) -> Result<(Vec<Option<f64>>, f64, f64)> {
    let provider = OutcomeProvider::replay(Arc::new(m.clone()), tree)?;
    let reference = leaf_rates(m, tree)?;
    let weights = run_seeds(tree, &provider, params, rounds, seeds)?;
    let per_seed: Vec<Vec<f64>> = weights.iter().map(|w| leaf_attribution(tree, w)).collect();
    let agg = metrics::seed_aggregate(&per_seed, &reference)?;
    let n = weights.len() as f64;
    let mut tiers = vec![0.0; tree.children(tree.root()).len()];
    for w in &weights {
        for (t, (_, mass)) in tiers.iter_mut().zip(level_attribution(tree, w, 1)?) {
            *t += mass / n;
        }
    }
    let spread =
        tiers.iter().copied().fold(f64::NEG_INFINITY, f64::max) - tiers.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((agg.per_seed_tau, agg.tau_of_mean.unwrap_or(f64::NAN), spread))
}

fn summarize(runs: &[(Vec<Option<f64>>, f64, f64)]) -> ConditionSummary {
    let per_seed_tau: Vec<Option<f64>> = runs.iter().flat_map(|r| r.0.iter().copied()).collect();
    let defined: Vec<f64> = per_seed_tau.iter().flatten().copied().collect();
    let (tau_mean, tau_std) = mean_std(&defined);
    let k = runs.len() as f64;
    ConditionSummary {
        per_seed_tau,
        tau_mean,
        tau_std,
        tau_of_mean: runs.iter().map(|r| r.1).sum::<f64>() / k,
        tier_spread: runs.iter().map(|r| r.2).sum::<f64>() / k,
    }
}

/// Replay the matrix under the natural hierarchy and under each leaf
/// permutation of it (same router shape, leaves reassigned).
pub fn grouping_ablation(
    m: &PassMatrix,
    natural: &Tree,
    perms: &[Vec<usize>],
    rounds: u64,
    seeds: &[u64],
    params: &SubstrateParams,
) -> Result<GroupingReport> {
    if perms.is_empty() {
        return Err(Error::Scenario("grouping ablation needs at least one shuffle".into()));
    }
    let nat = condition(m, natural, rounds, seeds, params)?;
    let shuffled: Vec<(Vec<Option<f64>>, f64, f64)> = perms
        .par_iter()
        .map(|p| condition(m, &natural.permute_leaves(p)?, rounds, seeds, params))
        .collect::<Result<_>>()?;
    // pair each seed's natural tau with its tau averaged over shuffles
    let mut wins = 0usize;
    let mut pairs = 0usize;
    for (i, a) in nat.0.iter().enumerate() {
        let b: Vec<f64> = shuffled.iter().filter_map(|s| s.0[i]).collect();
        if let (Some(a), false) = (a, b.is_empty()) {
            pairs += 1;
            wins += (*a > mean_std(&b).0) as usize;
        }
    }
    Ok(GroupingReport {
        natural: summarize(std::slice::from_ref(&nat)),
        shuffled: summarize(&shuffled),
        paired_natural_wins: if pairs == 0 {
            f64::NAN
        } else {
            wins as f64 / pairs as f64
        },
        rounds,
        shuffles: perms.len(),
    })
}

fn grouping_output(report: GroupingReport) -> Produced {
    let mut records = Vec::new();
    let mut plot = Vec::new();
    for (name, c) in [("natural", &report.natural), ("shuffled", &report.shuffled)] {
        let mut rec = SweepRecord {
            point: point([("grouping", json!(name))]),
            tau_mean: Some(c.tau_mean).filter(|x| x.is_finite()),
            tau_std: Some(c.tau_std).filter(|x| x.is_finite()),
            tau_of_mean: Some(c.tau_of_mean).filter(|x| x.is_finite()),
            rounds_per_seed: report.rounds,
            ..Default::default()
        };
        rec.scalars.insert("tier_spread".into(), c.tier_spread);
        if name == "shuffled" {
            rec.scalars.insert("shuffles".into(), report.shuffles as f64);
            rec.scalars
                .insert("paired_natural_wins".into(), report.paired_natural_wins);
        }
        rec.scalars.retain(|_, v| v.is_finite());
        for (i, t) in c.per_seed_tau.iter().enumerate() {
            if let Some(t) = t {
                plot.push(PlotPoint {
                    curve: format!("tau:{name}"),
                    x: i as f64,
                    y: *t,
                    seed: None,
                });
            }
        }
        records.push(rec);
    }
    Produced {
        records,
        plot,
        notes: vec!["shuffled hierarchies keep the router shape and reassign leaves uniformly at random".into()],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruningSet {
    pub attribution_guided: PruningReport,
    pub oracle: PruningReport,
    pub random: PruningReport,
    pub inverse: PruningReport,
}

impl PruningSet {
    pub fn reports(&self) -> [(&'static str, &PruningReport); 4] {
        [
            ("attribution-guided", &self.attribution_guided),
            ("oracle", &self.oracle),
            ("random", &self.random),
            ("inverse", &self.inverse),
        ]
    }
}

/// Coverage curves for four removal orders: lowest attribution first,
/// lowest pass rate first, `random` uniform orders averaged, and highest
/// attribution first. Attribution rows are matched to matrix components by
/// label.
pub fn pruning_scenario(m: &PassMatrix, attribution: &[(String, f64)], random: usize, seed: u64) -> Result<PruningSet> {
    let scores = dataio::align_to_labels(attribution, m.components())?;
    let mut ascending = metrics::descending_order(&scores);
    ascending.reverse();
    let mut oracle = metrics::descending_order(&m.pass_rates());
    oracle.reverse();
    let inverse = metrics::descending_order(&scores);
    let mut rng = rng::stream(seed, rng::SCENARIO_STREAM);
    let random_reports = (0..random.max(1))
        .map(|_| {
            let mut p: Vec<usize> = (0..m.n_components()).collect();
            p.shuffle(&mut rng);
            pruning_curve(m, &p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PruningSet {
        attribution_guided: pruning_curve(m, &ascending)?,
        oracle: pruning_curve(m, &oracle)?,
        random: PruningReport::average(&random_reports, "random").expect("at least one order"),
        inverse: pruning_curve(m, &inverse)?,
    })
}

#[allow(clippy::too_many_arguments)]
fn pruning(
    m: &PassMatrix,
    tree: &Tree,
    rounds: Option<u64>,
    random: usize,
    attribution: Option<&Path>,
    seeds: &[u64],
    params: &SubstrateParams,
    base: &Path,
) -> Result<Produced> {
    let mut out = Produced::default();
    let rows = match attribution {
        Some(p) => dataio::read_attribution(&base.join(p))?,
        None => {
            let replay = matrix_replay(m, tree, rounds, &[], false, seeds, params)?;
            let rec = &replay.records[0];
            out.notes.push(format!(
                "attribution from {} seed(s) of matrix replay, seed-averaged tau vs pass rate {:.3}",
                seeds.len(),
                rec.tau_of_mean.unwrap_or(f64::NAN)
            ));
            rec.labels
                .iter()
                .cloned()
                .zip(rec.mean_attribution.iter().copied())
                .collect()
        }
    };
    let set = pruning_scenario(m, &rows, random, seeds[0])?;
    let mut rec = SweepRecord {
        labels: m.components().to_vec(),
        rounds_per_seed: rounds.unwrap_or(m.n_problems() as u64),
        ..Default::default()
    };
    let all: Vec<usize> = (0..m.n_components()).collect();
    rec.scalars.insert("coverage_all".into(), m.coverage(&all));
    let best = m.pass_rates().into_iter().fold(0.0, f64::max);
    rec.scalars.insert("best_single_pass_rate".into(), best);
    for (name, report) in set.reports() {
        rec.scalars.insert(format!("aupc.{name}"), report.aupc);
        for (&r, &c) in report.remaining.iter().zip(&report.coverage) {
            out.plot.push(PlotPoint {
                curve: format!("coverage:{name}"),
                x: r as f64,
                y: c,
                seed: None,
            });
        }
        let mut stored = report.clone();
        if name == "random" {
            stored.removal_order = vec![format!("mean of {} uniform orders", random.max(1))];
        }
        rec.pruning.push(stored);
    }
    rec.mean_attribution = dataio::align_to_labels(&rows, m.components())?;
    out.records.push(rec);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub diagnostic: CellDiagnostic,
    /// Seed-averaged leaf attribution, in leaf order.
    pub routing: Vec<(String, f64)>,
    pub shap: ShapResult,
    /// Mismatch scoring probability per leaf.
    pub fallback: Vec<f64>,
    pub rounds: u64,
    pub seeds: Vec<u64>,
    pub note: String,
}

/// Replay a deployed trace through the substrate on `spec`, average the
/// leaf attribution over seeds, take Shapley values from the recorded
/// lattice, and compare. `pass_rates` (standalone per-tool rates) decide
/// whether the top pick is the best tool and score tools the trace never
/// picked; without it the trace's own rates are used and a never-picked
/// tool scores 0.
pub fn cell_pipeline(
    routes: &[DeployedRoute],
    table: &SubsetValueTable,
    spec: &HierarchySpec,
    pass_rates: Option<&[(String, f64)]>,
    params: &SubstrateParams,
    rounds: Option<u64>,
    seeds: &[u64],
) -> Result<CellReport> {
    if routes.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if seeds.is_empty() {
        return Err(Error::Scenario("no seeds".into()));
    }
    let tree = Tree::from_spec(spec)?;
    let leaves = tree.leaf_labels();
    let mut sorted_leaves = leaves.clone();
    sorted_leaves.sort();
    let mut sorted_table = table.labels().to_vec();
    sorted_table.sort();
    if sorted_leaves != sorted_table {
        return Err(Error::ShapeMismatch(format!(
            "subset table components {:?} differ from hierarchy leaves {:?}",
            table.labels(),
            leaves
        )));
    }
    let index: HashMap<&str, usize> = leaves.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let records = routes
        .iter()
        .map(|r| {
            index
                .get(r.tool.as_str())
                .map(|&j| (j, r.outcome))
                .ok_or_else(|| Error::UnknownLabel(format!("{} (picked in trace)", r.tool)))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = leaves.len();
    let mut wins = vec![0usize; n];
    let mut picks = vec![0usize; n];
    for &(j, o) in &records {
        picks[j] += 1;
        wins[j] += o as usize;
    }
    let standalone = pass_rates.map(|r| dataio::align_to_labels(r, &leaves)).transpose()?;
    let fallback: Vec<f64> = (0..n)
        .map(|j| match (picks[j], &standalone) {
            (0, Some(s)) => s[j],
            (0, None) => 0.0,
            (p, _) => wins[j] as f64 / p as f64,
        })
        .collect();

    let rounds = rounds.unwrap_or(records.len() as u64);
    let provider = OutcomeProvider::TraceReplay {
        records: Arc::new(records),
        fallback: QualityVector::new(fallback.clone())?,
    };
    let weights = run_seeds(&tree, &provider, params, rounds, seeds)?;
    let mut mean = vec![0.0; n];
    for w in &weights {
        for (m, a) in mean.iter_mut().zip(leaf_attribution(&tree, w)) {
            *m += a / weights.len() as f64;
        }
    }
    let routing: Vec<(String, f64)> = leaves.iter().cloned().zip(mean).collect();
    let shap = shap_from_table(table)?;
    let shap_rows: Vec<(String, f64)> = shap.labels.iter().cloned().zip(shap.phi.iter().copied()).collect();
    let rate_rows: Vec<(String, f64)> = match &standalone {
        Some(s) => leaves.iter().cloned().zip(s.iter().copied()).collect(),
        None => leaves.iter().cloned().zip(fallback.iter().copied()).collect(),
    };
    let pick_labels: Vec<String> = routes.iter().map(|r| r.tool.clone()).collect();
    let diagnostic = cell_diagnostic(&pick_labels, &routing, &shap_rows, &rate_rows)?;
    Ok(CellReport {
        diagnostic,
        routing,
        shap,
        fallback,
        rounds,
        seeds: seeds.to_vec(),
        note: REPLAY_NOTE.into(),
    })
}

fn cell_output(report: CellReport, driver: &str, benchmark: &str) -> Produced {
    let d = &report.diagnostic;
    let mut rec = SweepRecord {
        point: point([("driver", json!(driver)), ("benchmark", json!(benchmark))]),
        labels: d.tools.clone(),
        reference: Some(d.shap.clone()),
        mean_attribution: d.routing.clone(),
        tau_of_mean: Some(d.tau),
        rounds_per_seed: report.rounds,
        ..Default::default()
    };
    rec.scalars.insert("top_share".into(), d.top_share);
    rec.scalars
        .insert("top_equals_best".into(), d.top_equals_best as u8 as f64);
    rec.shap.push(report.shap.clone());
    rec.cell = Some(d.clone());
    let plot = d
        .routing
        .iter()
        .zip(&d.shap)
        .map(|(&x, &y)| PlotPoint {
            curve: "routing_vs_shap".into(),
            x,
            y,
            seed: None,
        })
        .collect();
    Produced {
        records: vec![rec],
        plot,
        notes: vec![report.note],
    }
}
