//! Scenario kinds driven by synthetic Bernoulli leaves.

use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use super::{
    aggregate, point, rank_normalize, resolve_qualities, rounds_at, run_seeds, tau_points, ContextSpec,
    HierarchySource, Phase, Produced, QualityRange, ScenarioConfig, ScenarioKind, SubstrateParams, SweepRecord,
};
use crate::attribution::{leaf_attribution, property_suite};
use crate::dataio::{self, PlotPoint};
use crate::error::Result;
use crate::hierarchy::{HierarchySpec, QualityVector, Tree, WeightState};
use crate::metrics::{self, mean_std, median};
use crate::substrate::{self, OutcomeProvider, RunOptions};

pub(crate) fn run(config: &ScenarioConfig, base: &Path) -> Result<Produced> {
    let seeds = &config.seeds;
    let params = &config.substrate;
    match &config.kind {
        ScenarioKind::GroundTruth {
            hierarchy,
            qualities,
            rounds,
        } => ground_truth(hierarchy, qualities, *rounds, seeds, params, base, false),
        ScenarioKind::Opaque {
            hierarchy,
            qualities,
            rounds,
        } => ground_truth(hierarchy, qualities, *rounds, seeds, params, base, true),
        ScenarioKind::Properties {
            hierarchy,
            qualities,
            rounds,
            equal_quality,
        } => properties(hierarchy, qualities, *rounds, *equal_quality, seeds, params, base),
        ScenarioKind::Scaling {
            depths,
            rounds,
            permutations,
            quality_range,
        } => scaling(depths, rounds, *permutations, quality_range, seeds, params),
        ScenarioKind::Dynamic {
            hierarchy,
            phases,
            rounds,
        } => dynamic(hierarchy, phases, *rounds, seeds, params, base),
        ScenarioKind::Sensitivity {
            trees,
            gaps,
            rounds,
            center,
        } => sensitivity(trees, gaps, rounds, *center, seeds, params),
        ScenarioKind::Trajectory {
            hierarchy,
            qualities,
            rounds,
            sample_every,
        } => trajectory(hierarchy, qualities, *rounds, *sample_every, seeds, params, base),
        ScenarioKind::DepthSweep {
            branching,
            depths,
            rounds,
            quality_range,
        } => depth_sweep(*branching, depths, rounds, quality_range, seeds, params),
        ScenarioKind::NoiseSweep {
            hierarchy,
            qualities,
            rounds,
            noise,
        } => noise_sweep(hierarchy, qualities, *rounds, noise, seeds, params, base),
        ScenarioKind::PerContext {
            hierarchy,
            contexts,
            rounds,
        } => per_context(hierarchy.as_ref(), contexts, *rounds, seeds, params, base),
        ScenarioKind::QualityRun {
            hierarchy,
            quality_table,
            rounds,
        } => quality_run(hierarchy, quality_table, *rounds, seeds, params, base),
        _ => unreachable!("dispatched to replay"),
    }
}

fn load(hierarchy: &HierarchySource, qualities: &Option<Vec<f64>>, base: &Path) -> Result<(Tree, Vec<f64>)> {
    let spec = hierarchy.load(base)?;
    let tree = Tree::from_spec(&spec)?;
    let q = resolve_qualities(&spec, qualities, &tree)?;
    Ok((tree, q))
}

fn bernoulli(q: &[f64]) -> Result<OutcomeProvider> {
    Ok(OutcomeProvider::Bernoulli(QualityVector::new(q.to_vec())?))
}

fn ground_truth(
    hierarchy: &HierarchySource,
    qualities: &Option<Vec<f64>>,
    rounds: u64,
    seeds: &[u64],
    params: &SubstrateParams,
    base: &Path,
    opaque: bool,
) -> Result<Produced> {
    let (tree, q) = load(hierarchy, qualities, base)?;
    let weights = run_seeds(&tree, &bernoulli(&q)?, params, rounds, seeds)?;
    let mut record = aggregate(&tree, point([]), seeds, &weights, Some(&q), rounds)?;
    let top = metrics::descending_order(&q)[0];
    let top_hits = record
        .per_seed
        .iter()
        .filter(|s| metrics::descending_order(&s.attribution)[0] == top)
        .count();
    record
        .scalars
        .insert("top_identified_fraction".into(), top_hits as f64 / seeds.len() as f64);
    let mut out = Produced {
        plot: tau_points("tau", 0.0, &record),
        ..Default::default()
    };
    if opaque {
        out.notes
            .push("qualities are used only to draw outcomes and to score the final ranking".into());
    }
    out.records.push(record);
    Ok(out)
}

fn properties(
    hierarchy: &HierarchySource,
    qualities: &Option<Vec<f64>>,
    rounds: u64,
    equal_quality: Option<f64>,
    seeds: &[u64],
    params: &SubstrateParams,
    base: &Path,
) -> Result<Produced> {
    let (tree, q) = load(hierarchy, qualities, base)?;
    let provider = bernoulli(&q)?;
    let runs: Vec<(WeightState, f64)> = seeds
        .par_iter()
        .map(|&s| {
            let mut worst: f64 = 0.0;
            let w = substrate::run_observed(&tree, &provider, &params.config(s, rounds), |_, _, _, _, w| {
                let total: f64 = leaf_attribution(&tree, w).iter().sum();
                worst = worst.max((total - 1.0).abs());
            })?;
            Ok((w, worst))
        })
        .collect::<Result<_>>()?;
    let weights: Vec<WeightState> = runs.iter().map(|r| r.0.clone()).collect();
    let mut record = aggregate(&tree, point([]), seeds, &weights, Some(&q), rounds)?;
    let mean_w = WeightState::mean(&weights).expect("seeds non-empty");
    let report = property_suite(&tree, &q, &mean_w)?;

    let worst_leaf = metrics::descending_order(&q).last().copied().expect("leaves");
    let s = &mut record.scalars;
    s.insert(
        "max_efficiency_residual".into(),
        runs.iter().map(|r| r.1).fold(0.0, f64::max),
    );
    s.insert("symmetry_max_deviation".into(), report.symmetry_max_deviation);
    s.insert("symmetric_pairs".into(), report.symmetric_pairs as f64);
    s.insert("worst_leaf_attribution".into(), record.mean_attribution[worst_leaf]);
    s.insert("uniform_leaf_attribution".into(), 1.0 / tree.n_leaves() as f64);
    s.insert(
        "suppressed_routers".into(),
        report
            .suppression
            .iter()
            .filter(|c| c.below_mean && c.suppressed)
            .count() as f64,
    );
    s.insert(
        "routers_with_below_mean_child".into(),
        report.suppression.iter().filter(|c| c.below_mean).count() as f64,
    );
    if let Some(e) = equal_quality {
        let flat = vec![e; tree.n_leaves()];
        let eq = run_seeds(&tree, &bernoulli(&flat)?, params, rounds, seeds)?;
        let eq_mean = WeightState::mean(&eq).expect("seeds non-empty");
        let eq_report = property_suite(&tree, &flat, &eq_mean)?;
        s.insert(
            "equal_quality_max_deviation_from_uniform".into(),
            eq_report.max_deviation_from_uniform,
        );
    }
    record.properties = Some(report);
    Ok(Produced {
        plot: tau_points("monotonicity_tau", 0.0, &record),
        records: vec![record],
        notes: Vec::new(),
    })
}

fn scaling(
    depths: &[usize],
    rounds: &[u64],
    permutations: usize,
    range: &QualityRange,
    seeds: &[u64],
    params: &SubstrateParams,
) -> Result<Produced> {
    let records: Vec<SweepRecord> = depths
        .par_iter()
        .enumerate()
        .map(|(i, &d)| {
            let r = rounds_at(rounds, i);
            let hier = Tree::balanced(&vec![3; d])?;
            let n = hier.n_leaves();
            let flat = Tree::balanced(&[n])?;
            let q = range.spaced(n);
            let provider = bernoulli(&q)?;
            let flat_w = run_seeds(&flat, &provider, params, r, seeds)?;
            let flat_rec = aggregate(&flat, point([]), seeds, &flat_w, Some(&q), r)?;
            let hier_w = run_seeds(&hier, &provider, params, r, seeds)?;
            let mut rec = aggregate(
                &hier,
                point([("depth", json!(d)), ("n", json!(n))]),
                seeds,
                &hier_w,
                Some(&q),
                r,
            )?;
            // one outcome-bearing instance per substrate round
            let shap_evals = r as f64 * permutations as f64 * n as f64;
            let s = &mut rec.scalars;
            s.insert("substrate_rounds".into(), r as f64);
            s.insert("shap_permutation_evaluations".into(), shap_evals);
            s.insert("shap_exact_lattice_per_instance".into(), 2f64.powi(n as i32) - 1.0);
            s.insert("shap_evaluations_per_round".into(), shap_evals / r as f64);
            s.insert("flat_tau_mean".into(), flat_rec.tau_mean.unwrap_or(f64::NAN));
            s.insert("flat_tau_of_mean".into(), flat_rec.tau_of_mean.unwrap_or(f64::NAN));
            s.retain(|_, v| v.is_finite());
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    let mut plot = Vec::new();
    for rec in &records {
        let n = rec.labels.len() as f64;
        plot.push(PlotPoint {
            curve: "shap_evaluations_per_round".into(),
            x: n,
            y: rec.scalars["shap_evaluations_per_round"],
            seed: None,
        });
        plot.extend(tau_points("hierarchical_tau", n, rec));
    }
    Ok(Produced {
        records,
        plot,
        notes: vec![format!(
            "evaluation ratio reported for {permutations} permutations per instance; no fixed multiplier is asserted"
        )],
    })
}

fn argmax(v: &[f64]) -> usize {
    metrics::descending_order(v)[0]
}

fn dynamic(
    hierarchy: &HierarchySource,
    phases: &[Phase],
    rounds: u64,
    seeds: &[u64],
    params: &SubstrateParams,
    base: &Path,
) -> Result<Produced> {
    let spec = hierarchy.load(base)?;
    let tree = Tree::from_spec(&spec)?;
    let schedule = phases
        .iter()
        .map(|p| {
            Ok((
                p.start,
                OutcomeProvider::Bernoulli(QualityVector::for_tree(p.qualities.clone(), &tree)?),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let provider = OutcomeProvider::Scheduled { phases: schedule };
    let switches: Vec<(u64, usize)> = phases[1..].iter().map(|p| (p.start, argmax(&p.qualities))).collect();

    // per seed: final weights and, per switch, rounds until the new best
    // leaf first tops the attribution (censored at the run end)
    let runs: Vec<(WeightState, Vec<(u64, bool)>)> = seeds
        .par_iter()
        .map(|&s| {
            let mut found: Vec<Option<u64>> = vec![None; switches.len()];
            let w = substrate::run_observed(&tree, &provider, &params.config(s, rounds), |t, _, _, _, w| {
                let active = switches.iter().rposition(|&(start, _)| start < t);
                if let Some(k) = active {
                    if found[k].is_none() && argmax(&leaf_attribution(&tree, w)) == switches[k].1 {
                        found[k] = Some(t - switches[k].0);
                    }
                }
            })?;
            let delays = found
                .iter()
                .zip(&switches)
                .map(|(f, &(start, _))| match f {
                    Some(d) => (*d, true),
                    None => (rounds.saturating_sub(start), false),
                })
                .collect();
            Ok((w, delays))
        })
        .collect::<Result<_>>()?;
    let weights: Vec<WeightState> = runs.iter().map(|r| r.0.clone()).collect();
    let last = &phases.last().expect("phases non-empty").qualities;
    let mut record = aggregate(&tree, point([]), seeds, &weights, Some(last), rounds)?;
    let delays: Vec<f64> = runs.iter().flat_map(|r| r.1.iter().map(|d| d.0 as f64)).collect();
    let censored = runs.iter().flat_map(|r| &r.1).filter(|d| !d.1).count();
    let mut plot = Vec::new();
    for (&seed, run) in seeds.iter().zip(&runs) {
        for (k, d) in run.1.iter().enumerate() {
            plot.push(PlotPoint {
                curve: format!("tracking_delay:switch{k}"),
                x: switches[k].0 as f64,
                y: d.0 as f64,
                seed: Some(seed),
            });
        }
    }
    if let Some(m) = median(&delays) {
        record.scalars.insert("tracking_delay_median".into(), m);
        record.scalars.insert("tracking_delay_mean".into(), mean_std(&delays).0);
    }
    record.scalars.insert("tracking_censored".into(), censored as f64);
    Ok(Produced {
        records: vec![record],
        plot,
        notes: vec![
            "tracking delay: rounds after a switch until the new best leaf first holds the largest attribution".into(),
        ],
    })
}

fn sensitivity(
    trees: &[Vec<usize>],
    gaps: &[f64],
    rounds: &[u64],
    center: f64,
    seeds: &[u64],
    params: &SubstrateParams,
) -> Result<Produced> {
    let mut points = Vec::new();
    for t in trees {
        for &g in gaps {
            for &r in rounds {
                points.push((t.clone(), g, r));
            }
        }
    }
    let records: Vec<SweepRecord> = points
        .par_iter()
        .map(|(branching, gap, r)| {
            let tree = Tree::balanced(branching)?;
            let n = tree.n_leaves();
            let half = (n - 1) as f64 / 2.0;
            let q: Vec<f64> = (0..n).map(|j| center + gap * (half - j as f64)).collect();
            let weights = run_seeds(&tree, &bernoulli(&q)?, params, *r, seeds)?;
            let p = point([("tree", json!(branching)), ("gap", json!(gap)), ("rounds", json!(r))]);
            let mut rec = aggregate(&tree, p, seeds, &weights, Some(&q), *r)?;
            let uniform = 1.0 / n as f64;
            let dev = rec
                .mean_attribution
                .iter()
                .map(|a| (a - uniform).abs())
                .fold(0.0, f64::max);
            rec.scalars.insert("max_deviation_from_uniform".into(), dev);
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    let plot = records
        .iter()
        .flat_map(|rec| {
            let curve = format!("tau:{}", rec.point["tree"]);
            tau_points(&curve, rec.point["gap"].as_f64().unwrap_or(f64::NAN), rec)
        })
        .collect();
    Ok(Produced {
        records,
        plot,
        notes: Vec::new(),
    })
}

fn trajectory(
    hierarchy: &HierarchySource,
    qualities: &Option<Vec<f64>>,
    rounds: u64,
    every: u64,
    seeds: &[u64],
    params: &SubstrateParams,
    base: &Path,
) -> Result<Produced> {
    let (tree, q) = load(hierarchy, qualities, base)?;
    let provider = bernoulli(&q)?;
    let options = RunOptions {
        snapshot_every: Some(every),
        ..Default::default()
    };
    let outs: Vec<Vec<WeightState>> = seeds
        .par_iter()
        .map(|&s| substrate::run_with(&tree, &provider, &params.config(s, rounds), &options).map(|o| o.snapshots))
        .collect::<Result<_>>()?;
    let finals: Vec<WeightState> = outs.iter().map(|o| o.last().expect("final snapshot").clone()).collect();
    let mut record = aggregate(&tree, point([]), seeds, &finals, Some(&q), rounds)?;

    let mut plot = Vec::new();
    for i in 0..outs[0].len() {
        let at: Vec<WeightState> = outs.iter().map(|o| o[i].clone()).collect();
        let mean = WeightState::mean(&at).expect("seeds non-empty");
        for slot in 0..tree.n_routers() {
            let router = tree.router(slot);
            for (c, &child) in tree.children(router).iter().enumerate() {
                plot.push(PlotPoint {
                    curve: format!("{}/{}", tree.label(router), tree.label(child)),
                    x: mean.round as f64,
                    y: mean.weights[slot][c],
                    seed: None,
                });
            }
        }
    }
    let root = tree.root();
    let root_w = record.mean_weights[tree.label(root)].clone();
    for (&child, w) in tree.children(root).iter().zip(root_w) {
        record.scalars.insert(format!("root/{}", tree.label(child)), w);
    }
    Ok(Produced {
        records: vec![record],
        plot,
        notes: Vec::new(),
    })
}

fn depth_sweep(
    branching: usize,
    depths: &[usize],
    rounds: &[u64],
    range: &QualityRange,
    seeds: &[u64],
    params: &SubstrateParams,
) -> Result<Produced> {
    let results: Vec<(SweepRecord, Vec<PlotPoint>)> = depths
        .par_iter()
        .enumerate()
        .map(|(i, &d)| {
            let r = rounds_at(rounds, i);
            let tree = Tree::balanced(&vec![branching; d])?;
            let q = range.spaced(tree.n_leaves());
            let provider = bernoulli(&q)?;
            let every = (r / 100).max(1);
            let options = RunOptions {
                snapshot_every: Some(every),
                ..Default::default()
            };
            let snaps: Vec<Vec<WeightState>> = seeds
                .par_iter()
                .map(|&s| substrate::run_with(&tree, &provider, &params.config(s, r), &options).map(|o| o.snapshots))
                .collect::<Result<_>>()?;
            let finals: Vec<WeightState> = snaps.iter().map(|o| o.last().expect("final").clone()).collect();
            let mut rec = aggregate(
                &tree,
                point([("depth", json!(d)), ("rounds", json!(r))]),
                seeds,
                &finals,
                Some(&q),
                r,
            )?;

            // seed-mean tau at every sampled round
            let curve: Vec<(f64, f64)> = (0..snaps[0].len())
                .map(|k| {
                    let taus: Vec<f64> = snaps
                        .iter()
                        .filter_map(|o| metrics::tau_b(&q, &leaf_attribution(&tree, &o[k])).ok())
                        .collect();
                    (snaps[0][k].round as f64, mean_std(&taus).0)
                })
                .collect();
            let final_tau = rec.tau_mean.unwrap_or(f64::NAN);
            if final_tau.is_finite() {
                let target = 0.9 * final_tau;
                if let Some(&(x, _)) = curve.iter().find(|(_, t)| *t >= target) {
                    rec.scalars.insert("rounds_to_90pct_final_tau".into(), x);
                }
            }
            let label = format!("tau:depth{d}");
            let plot = curve
                .iter()
                .filter(|(_, y)| y.is_finite())
                .map(|&(x, y)| PlotPoint {
                    curve: label.clone(),
                    x,
                    y,
                    seed: None,
                })
                .collect();
            Ok((rec, plot))
        })
        .collect::<Result<_>>()?;
    let mut out = Produced::default();
    for (rec, plot) in results {
        out.records.push(rec);
        out.plot.extend(plot);
    }
    out.notes
        .push("rounds to 90% of final tau are read off the seed-mean tau sampled every 1% of rounds".into());
    Ok(out)
}

fn noise_sweep(
    hierarchy: &HierarchySource,
    qualities: &Option<Vec<f64>>,
    rounds: u64,
    noise: &[f64],
    seeds: &[u64],
    params: &SubstrateParams,
    base: &Path,
) -> Result<Produced> {
    let (tree, q) = load(hierarchy, qualities, base)?;
    let records: Vec<SweepRecord> = noise
        .par_iter()
        .map(|&flip| {
            let provider = OutcomeProvider::noisy(bernoulli(&q)?, flip);
            let weights = run_seeds(&tree, &provider, params, rounds, seeds)?;
            aggregate(
                &tree,
                point([("noise", json!(flip))]),
                seeds,
                &weights,
                Some(&q),
                rounds,
            )
        })
        .collect::<Result<_>>()?;
    let plot = records
        .iter()
        .zip(noise)
        .flat_map(|(rec, &flip)| tau_points("tau", flip, rec))
        .collect();
    Ok(Produced {
        records,
        plot,
        notes: Vec::new(),
    })
}

fn per_context(
    hierarchy: Option<&HierarchySource>,
    contexts: &[ContextSpec],
    rounds: u64,
    seeds: &[u64],
    params: &SubstrateParams,
    base: &Path,
) -> Result<Produced> {
    let n = contexts[0].qualities.len();
    let spec = match hierarchy {
        Some(h) => h.load(base)?,
        None => HierarchySpec::flat(&(0..n).map(|i| format!("s{i}")).collect::<Vec<_>>()),
    };
    let tree = Tree::from_spec(&spec)?;
    let vectors = contexts
        .iter()
        .map(|c| QualityVector::for_tree(c.qualities.clone(), &tree))
        .collect::<Result<Vec<_>>>()?;

    let mut records: Vec<SweepRecord> = contexts
        .par_iter()
        .zip(&vectors)
        .map(|(c, q)| {
            let weights = run_seeds(&tree, &OutcomeProvider::Bernoulli(q.clone()), params, rounds, seeds)?;
            let mut rec = aggregate(
                &tree,
                point([("context", json!(c.name))]),
                seeds,
                &weights,
                Some(q.as_slice()),
                rounds,
            )?;
            let best = argmax(q.as_slice());
            rec.scalars.insert("best_index".into(), best as f64);
            rec.scalars
                .insert("best_attribution".into(), rec.mean_attribution[best]);
            Ok(rec)
        })
        .collect::<Result<_>>()?;

    let mixed = OutcomeProvider::Contextual { contexts: vectors };
    let mean_q = mixed.expected_quality().expect("contextual qualities");
    let weights = run_seeds(&tree, &mixed, params, rounds, seeds)?;
    let mut agnostic = aggregate(
        &tree,
        point([("context", json!("agnostic"))]),
        seeds,
        &weights,
        Some(&mean_q),
        rounds,
    )?;
    let band =
        mean_q.iter().copied().fold(f64::NEG_INFINITY, f64::max) - mean_q.iter().copied().fold(f64::INFINITY, f64::min);
    agnostic.scalars.insert("mean_quality_band".into(), band);
    records.push(agnostic);

    let plot = records
        .iter()
        .flat_map(|rec| {
            let ctx = rec.point["context"].as_str().unwrap_or_default().to_string();
            rec.labels
                .iter()
                .zip(&rec.mean_attribution)
                .enumerate()
                .map(move |(j, (_, &a))| PlotPoint {
                    curve: format!("attribution:{ctx}"),
                    x: j as f64,
                    y: a,
                    seed: None,
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(Produced {
        records,
        plot,
        notes: vec!["contexts run separately; the agnostic record interleaves them round-robin".into()],
    })
}

fn quality_run(
    hierarchy: &HierarchySource,
    table: &Path,
    rounds: u64,
    seeds: &[u64],
    params: &SubstrateParams,
    base: &Path,
) -> Result<Produced> {
    let tree = Tree::from_spec(&hierarchy.load(base)?)?;
    let raw = dataio::align_qualities(&dataio::read_quality_table(&base.join(table))?, &tree)?;
    let p = rank_normalize(&raw)?;
    let weights = run_seeds(&tree, &bernoulli(&p)?, params, rounds, seeds)?;
    let mut rec = aggregate(&tree, point([]), seeds, &weights, Some(&raw), rounds)?;
    for (k, level) in rec.levels.clone().iter().enumerate() {
        let quality: Vec<f64> = level
            .iter()
            .map(|m| {
                let node = tree.find(&m.label).expect("level labels come from the tree");
                let leaves = tree.subtree_leaves(node);
                leaves.iter().map(|&j| raw[j]).sum::<f64>() / leaves.len() as f64
            })
            .collect();
        let mass: Vec<f64> = level.iter().map(|m| m.mass).collect();
        if let Ok(t) = metrics::tau_b(&quality, &mass) {
            rec.scalars.insert(format!("level{}_tau", k + 1), t);
        }
    }
    let plot = tau_points("tau", 0.0, &rec);
    Ok(Produced {
        records: vec![rec],
        plot,
        notes: vec!["raw qualities are rank-normalized onto [0.05, 0.95] before driving outcomes".into()],
    })
}
