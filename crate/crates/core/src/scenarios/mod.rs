//! Declarative experiment runner.
//!
//! A [`ScenarioConfig`] names one experiment kind with its hierarchy,
//! qualities or pass matrix, round budget, seeds and sweep axes.
//! [`run_scenario`] runs every seed and sweep point in parallel and returns
//! a [`ScenarioResult`] document plus flat plot data. Results hold no
//! timestamps or hash-ordered maps, so identical configs give byte-identical
//! documents.

mod data;
mod replay;
mod synthetic;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::attribution::{leaf_attribution, AttributionResult, LabelledMass, PropertyReport};
use crate::baselines::{CoalitionKind, ShapResult};
use crate::dataio::{self, PlotPoint};
use crate::error::{Error, Result};
use crate::hierarchy::{balanced_spec, HierarchySpec, SpecNode, Tree, WeightState};
use crate::metrics::{self, CellDiagnostic, PruningReport};
use crate::substrate::{self, OutcomeProvider, SubstrateConfig};

pub use data::{preset_spec, rank_normalize, synthetic_matrix, tiered18, PresetEntry, TIERED18};
pub use replay::{
    cell_pipeline, grouping_ablation, pruning_scenario, CellReport, ConditionSummary, GroupingReport, PruningSet,
    REPLAY_NOTE,
};

pub const CODE_VERSION: &str = concat!("hierattr ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubstrateParams {
    pub eta: f64,
    pub epsilon: f64,
}

impl Default for SubstrateParams {
    fn default() -> Self {
        let d = SubstrateConfig::default();
        SubstrateParams {
            eta: d.eta,
            epsilon: d.epsilon,
        }
    }
}

impl SubstrateParams {
    pub fn config(&self, seed: u64, rounds: u64) -> SubstrateConfig {
        SubstrateConfig {
            eta: self.eta,
            epsilon: self.epsilon,
            seed,
            rounds,
        }
    }
}

/// Where a hierarchy comes from. Relative paths resolve against the config
/// file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HierarchySource {
    /// Balanced tree with per-level branching.
    Balanced(Vec<usize>),
    /// Hierarchy spec document.
    File(PathBuf),
    Inline(SpecNode),
    /// Built-in hierarchy; `tiered18` is the only one.
    Preset(String),
}

impl HierarchySource {
    pub fn load(&self, base: &Path) -> Result<HierarchySpec> {
        match self {
            HierarchySource::Balanced(b) => balanced_spec(b),
            HierarchySource::File(p) => dataio::read_hierarchy_spec(&base.join(p)),
            HierarchySource::Inline(root) => Ok(HierarchySpec { root: root.clone() }),
            HierarchySource::Preset(name) => match name.as_str() {
                "tiered18" => Ok(preset_spec(&TIERED18)),
                other => Err(Error::Scenario(format!("unknown hierarchy preset `{other}`"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixSource {
    File(PathBuf),
    Synthetic(SyntheticMatrix),
}

/// Parameters of [`synthetic_matrix`] over the `tiered18` preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticMatrix {
    pub problems: usize,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for SyntheticMatrix {
    fn default() -> Self {
        SyntheticMatrix {
            problems: 880,
            jitter: 0.1,
            seed: 0,
        }
    }
}

impl MatrixSource {
    /// The matrix, plus the preset hierarchy for synthetic sources.
    pub fn load(&self, base: &Path) -> Result<(crate::PassMatrix, Option<HierarchySpec>)> {
        match self {
            MatrixSource::File(p) => Ok((dataio::read_pass_matrix(&base.join(p))?, None)),
            MatrixSource::Synthetic(s) => {
                let (m, spec) = tiered18(s.problems, s.jitter, s.seed)?;
                Ok((m, Some(spec)))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    /// First round (0-based) the phase is active.
    pub start: u64,
    pub qualities: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSpec {
    pub name: String,
    pub qualities: Vec<f64>,
}

/// Linearly spaced leaf qualities from `low` (first leaf) to `high` (last).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityRange {
    pub low: f64,
    pub high: f64,
}

impl Default for QualityRange {
    fn default() -> Self {
        QualityRange { low: 0.1, high: 0.9 }
    }
}

impl QualityRange {
    pub fn spaced(&self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![(self.low + self.high) / 2.0];
        }
        (0..n)
            .map(|j| self.low + (self.high - self.low) * j as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapEstimator {
    Exact,
    Permutation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapSpec {
    #[serde(default = "default_kind")]
    pub kind: CoalitionKind,
    pub estimator: ShapEstimator,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_kind() -> CoalitionKind {
    CoalitionKind::Or
}
fn default_permutations() -> usize {
    500
}
fn default_seeds() -> Vec<u64> {
    (0..20).collect()
}
fn default_random() -> usize {
    100
}
fn default_sample_every() -> u64 {
    100
}
fn default_branching() -> usize {
    3
}
fn default_center() -> f64 {
    0.5
}
fn default_equal_quality() -> Option<f64> {
    Some(0.5)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScenarioKind {
    /// Stationary Bernoulli leaves; attribution ranked against qualities.
    GroundTruth {
        hierarchy: HierarchySource,
        #[serde(default)]
        qualities: Option<Vec<f64>>,
        rounds: u64,
    },
    /// Same protocol with the qualities treated as hidden; reported with
    /// the seed-averaged significance.
    Opaque {
        hierarchy: HierarchySource,
        #[serde(default)]
        qualities: Option<Vec<f64>>,
        rounds: u64,
    },
    /// Efficiency checked every round, plus symmetry and suppression; a
    /// second all-equal run measures drift from uniform.
    Properties {
        hierarchy: HierarchySource,
        #[serde(default)]
        qualities: Option<Vec<f64>>,
        rounds: u64,
        #[serde(default = "default_equal_quality")]
        equal_quality: Option<f64>,
    },
    /// Flat `[3^d]` against balanced `[3]^d`, with Shapley evaluation
    /// counts for the configured permutation budget.
    Scaling {
        depths: Vec<usize>,
        rounds: Vec<u64>,
        #[serde(default = "default_permutations")]
        permutations: usize,
        #[serde(default)]
        quality_range: QualityRange,
    },
    /// Piecewise-constant qualities; reports rounds until the new best leaf
    /// tops the attribution after each switch.
    Dynamic {
        hierarchy: HierarchySource,
        phases: Vec<Phase>,
        rounds: u64,
    },
    /// Small evenly spaced quality gaps on shallow trees.
    Sensitivity {
        trees: Vec<Vec<usize>>,
        gaps: Vec<f64>,
        rounds: Vec<u64>,
        #[serde(default = "default_center")]
        center: f64,
    },
    /// Seed-averaged weight trajectories of every router.
    Trajectory {
        hierarchy: HierarchySource,
        #[serde(default)]
        qualities: Option<Vec<f64>>,
        rounds: u64,
        #[serde(default = "default_sample_every")]
        sample_every: u64,
    },
    /// Balanced trees of growing depth; `rounds[i]` pairs with `depths[i]`.
    DepthSweep {
        #[serde(default = "default_branching")]
        branching: usize,
        depths: Vec<usize>,
        rounds: Vec<u64>,
        #[serde(default)]
        quality_range: QualityRange,
    },
    /// Outcomes flipped with each configured probability.
    NoiseSweep {
        hierarchy: HierarchySource,
        #[serde(default)]
        qualities: Option<Vec<f64>>,
        rounds: u64,
        noise: Vec<f64>,
    },
    /// One run per context, plus an interleaved context-agnostic run.
    PerContext {
        #[serde(default)]
        hierarchy: Option<HierarchySource>,
        contexts: Vec<ContextSpec>,
        rounds: u64,
    },
    /// Replay a pass matrix; optional Shapley and win-rate baselines.
    MatrixReplay {
        matrix: MatrixSource,
        #[serde(default)]
        hierarchy: Option<HierarchySource>,
        /// Defaults to one pass over the problems.
        #[serde(default)]
        rounds: Option<u64>,
        #[serde(default)]
        shap: Vec<ShapSpec>,
        #[serde(default)]
        winrate: bool,
    },
    /// Natural hierarchy against leaf-shuffled ones.
    GroupingAblation {
        matrix: MatrixSource,
        #[serde(default)]
        hierarchy: Option<HierarchySource>,
        #[serde(default)]
        rounds: Option<u64>,
        shuffles: usize,
    },
    /// Coverage curves under four removal orders.
    Pruning {
        matrix: MatrixSource,
        #[serde(default)]
        hierarchy: Option<HierarchySource>,
        #[serde(default)]
        rounds: Option<u64>,
        #[serde(default = "default_random")]
        random: usize,
        /// Attribution table to prune by; when absent the substrate is
        /// replayed on the matrix to produce one.
        #[serde(default)]
        attribution: Option<PathBuf>,
    },
    /// Raw per-leaf qualities, rank-normalized into Bernoulli probabilities.
    QualityRun {
        hierarchy: HierarchySource,
        quality_table: PathBuf,
        rounds: u64,
    },
    /// Replay a deployed trace and compare against a recorded lattice.
    CellDiagnostic {
        hierarchy: HierarchySource,
        trace: PathBuf,
        subset_table: PathBuf,
        #[serde(default)]
        pass_rates: Option<PathBuf>,
        /// Defaults to one pass over the trace.
        #[serde(default)]
        rounds: Option<u64>,
        #[serde(default)]
        driver: String,
        #[serde(default)]
        benchmark: String,
    },
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::GroundTruth { .. } => "ground-truth",
            ScenarioKind::Opaque { .. } => "opaque",
            ScenarioKind::Properties { .. } => "properties",
            ScenarioKind::Scaling { .. } => "scaling",
            ScenarioKind::Dynamic { .. } => "dynamic",
            ScenarioKind::Sensitivity { .. } => "sensitivity",
            ScenarioKind::Trajectory { .. } => "trajectory",
            ScenarioKind::DepthSweep { .. } => "depth-sweep",
            ScenarioKind::NoiseSweep { .. } => "noise-sweep",
            ScenarioKind::PerContext { .. } => "per-context",
            ScenarioKind::MatrixReplay { .. } => "matrix-replay",
            ScenarioKind::GroupingAblation { .. } => "grouping-ablation",
            ScenarioKind::Pruning { .. } => "pruning",
            ScenarioKind::QualityRun { .. } => "quality-run",
            ScenarioKind::CellDiagnostic { .. } => "cell-diagnostic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub substrate: SubstrateParams,
    #[serde(flatten)]
    pub kind: ScenarioKind,
}

fn nonempty<T>(axis: &[T], what: &str) -> Result<()> {
    if axis.is_empty() {
        Err(Error::Scenario(format!("`{what}` must not be empty")))
    } else {
        Ok(())
    }
}

fn positive(rounds: u64) -> Result<()> {
    if rounds == 0 {
        Err(Error::Scenario("`rounds` must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// `rounds` either matches `axis` in length or is a single shared value.
fn paired_rounds(rounds: &[u64], len: usize, what: &str) -> Result<()> {
    nonempty(rounds, "rounds")?;
    rounds.iter().try_for_each(|&r| positive(r))?;
    if rounds.len() != 1 && rounds.len() != len {
        return Err(Error::Scenario(format!(
            "`rounds` has {} entries; expected 1 or one per {what} ({len})",
            rounds.len()
        )));
    }
    Ok(())
}

fn rounds_at(rounds: &[u64], i: usize) -> u64 {
    rounds[if rounds.len() == 1 { 0 } else { i }]
}

impl ScenarioConfig {
    /// Structural checks that need no file access.
    pub fn validate(&self) -> Result<()> {
        nonempty(&self.seeds, "seeds")?;
        self.substrate.config(0, 1).validate()?;
        match &self.kind {
            ScenarioKind::GroundTruth { rounds, .. }
            | ScenarioKind::Opaque { rounds, .. }
            | ScenarioKind::Properties { rounds, .. }
            | ScenarioKind::QualityRun { rounds, .. } => positive(*rounds),
            ScenarioKind::Trajectory {
                rounds, sample_every, ..
            } => {
                positive(*rounds)?;
                if *sample_every == 0 {
                    return Err(Error::Scenario("`sample_every` must be at least 1".into()));
                }
                Ok(())
            }
            ScenarioKind::Scaling { depths, rounds, .. } => {
                nonempty(depths, "depths")?;
                paired_rounds(rounds, depths.len(), "depth")
            }
            ScenarioKind::DepthSweep { depths, rounds, .. } => {
                nonempty(depths, "depths")?;
                paired_rounds(rounds, depths.len(), "depth")
            }
            ScenarioKind::Dynamic { phases, rounds, .. } => {
                positive(*rounds)?;
                nonempty(phases, "phases")
            }
            ScenarioKind::Sensitivity {
                trees, gaps, rounds, ..
            } => {
                nonempty(trees, "trees")?;
                nonempty(gaps, "gaps")?;
                nonempty(rounds, "rounds")?;
                rounds.iter().try_for_each(|&r| positive(r))
            }
            ScenarioKind::NoiseSweep { rounds, noise, .. } => {
                positive(*rounds)?;
                nonempty(noise, "noise")
            }
            ScenarioKind::PerContext { contexts, rounds, .. } => {
                positive(*rounds)?;
                nonempty(contexts, "contexts")
            }
            ScenarioKind::MatrixReplay { rounds, .. }
            | ScenarioKind::Pruning { rounds, .. }
            | ScenarioKind::CellDiagnostic { rounds, .. } => rounds.map_or(Ok(()), positive),
            ScenarioKind::GroupingAblation { rounds, shuffles, .. } => {
                if *shuffles == 0 {
                    return Err(Error::Scenario("`shuffles` must be at least 1".into()));
                }
                rounds.map_or(Ok(()), positive)
            }
        }
    }

    /// Hex SHA-256 of the config's compact JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("serializable config");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Parse a config document into a JSON value so overrides can be applied
/// before it is typed.
pub fn parse_config_value(text: &str, path: &Path) -> Result<Value> {
    dataio::parse_json(text, path)
}

pub fn config_from_value(value: Value) -> Result<ScenarioConfig> {
    let config: ScenarioConfig =
        serde_json::from_value(value).map_err(|e| Error::Scenario(format!("config does not parse: {e}")))?;
    config.validate()?;
    Ok(config)
}

pub fn read_config(path: &Path) -> Result<ScenarioConfig> {
    let text = dataio::read_text(path)?;
    let value = parse_config_value(&text, path)?;
    config_from_value(value).map_err(|e| match e {
        Error::Scenario(m) => Error::Scenario(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Set a dotted key (`substrate.eta`, `rounds`) on a config value. The raw
/// text is parsed as JSON when possible and kept as a string otherwise.
pub fn set_override(config: &mut Value, key: &str, raw: &str) -> Result<()> {
    set_value(config, key, parse_scalar(raw))
}

/// Set a dotted key to a list of comma-separated values.
pub fn set_sweep(config: &mut Value, key: &str, raw: &str) -> Result<()> {
    let items: Vec<Value> = raw.split(',').map(|s| parse_scalar(s.trim())).collect();
    if items.iter().any(|v| v.as_str() == Some("")) {
        return Err(Error::Scenario(format!("empty value in sweep `{key}={raw}`")));
    }
    set_value(config, key, Value::Array(items))
}

fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_value(config: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = config;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Scenario(format!("bad override key `{key}`")));
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Scenario(format!("override `{key}`: `{}` is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub attribution: Vec<f64>,
    pub tau: Option<f64>,
}

/// Aggregate for one sweep point (or the single point of a non-sweep kind).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    /// Sweep coordinates, e.g. `{"noise": 0.3}`.
    pub point: BTreeMap<String, Value>,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<f64>>,
    pub per_seed: Vec<SeedRecord>,
    pub mean_attribution: Vec<f64>,
    pub tau_mean: Option<f64>,
    pub tau_std: Option<f64>,
    /// Tau of the seed-averaged attribution against the reference.
    pub tau_of_mean: Option<f64>,
    pub rho_of_mean: Option<f64>,
    pub p_value_of_mean: Option<f64>,
    pub rounds_per_seed: u64,
    /// Seed-averaged router weights, keyed by router label.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub mean_weights: BTreeMap<String, Vec<f64>>,
    /// Seed-averaged level distributions; `levels[k - 1]` is level `k`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<Vec<LabelledMass>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scalars: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub properties: Option<PropertyReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pruning: Vec<PruningReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shap: Vec<ShapResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<CellDiagnostic>,
}

impl SweepRecord {
    pub fn scalar(&self, key: &str) -> Option<f64> {
        self.scalars.get(key).copied()
    }
}

pub const RESULT_FORMAT: &str = "scenario-result";
pub const RESULT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub kind: String,
    pub config_hash: String,
    pub code_version: String,
    pub seeds: Vec<u64>,
    pub config: ScenarioConfig,
    pub records: Vec<SweepRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ScenarioResult {
    pub fn record(&self, key: &str, value: f64) -> Option<&SweepRecord> {
        self.records
            .iter()
            .find(|r| r.point.get(key).and_then(Value::as_f64) == Some(value))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioOutput {
    pub result: ScenarioResult,
    pub plot: Vec<PlotPoint>,
}

impl ScenarioOutput {
    /// Write `result.json` and `plot.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        dataio::write_json(&dir.join("result.json"), &self.result)?;
        dataio::write_plot_data(&dir.join("plot.csv"), &self.plot)
    }
}

/// Records, plot points and notes produced by one scenario kind.
#[derive(Default)]
pub(crate) struct Produced {
    pub records: Vec<SweepRecord>,
    pub plot: Vec<PlotPoint>,
    pub notes: Vec<String>,
}

/// Run a validated scenario. Relative paths in the config resolve against
/// `base_dir`.
pub fn run_scenario(config: &ScenarioConfig, base_dir: &Path) -> Result<ScenarioOutput> {
    config.validate()?;
    let produced = match &config.kind {
        ScenarioKind::GroundTruth { .. }
        | ScenarioKind::Opaque { .. }
        | ScenarioKind::Properties { .. }
        | ScenarioKind::Scaling { .. }
        | ScenarioKind::Dynamic { .. }
        | ScenarioKind::Sensitivity { .. }
        | ScenarioKind::Trajectory { .. }
        | ScenarioKind::DepthSweep { .. }
        | ScenarioKind::NoiseSweep { .. }
        | ScenarioKind::PerContext { .. }
        | ScenarioKind::QualityRun { .. } => synthetic::run(config, base_dir)?,
        _ => replay::run(config, base_dir)?,
    };
    Ok(ScenarioOutput {
        result: ScenarioResult {
            format: RESULT_FORMAT.into(),
            version: RESULT_VERSION,
            name: config.name.clone(),
            kind: config.kind.name().into(),
            config_hash: config.hash(),
            code_version: CODE_VERSION.into(),
            seeds: config.seeds.clone(),
            config: config.clone(),
            records: produced.records,
            notes: produced.notes,
        },
        plot: produced.plot,
    })
}

// ------------------------------------------------------------------ helpers

/// Final weights of one run per seed, in seed order.
pub(crate) fn run_seeds(
    tree: &Tree,
    provider: &OutcomeProvider,
    params: &SubstrateParams,
    rounds: u64,
    seeds: &[u64],
) -> Result<Vec<WeightState>> {
    seeds
        .par_iter()
        .map(|&s| substrate::run(tree, provider, &params.config(s, rounds)).map(|o| o.weights))
        .collect()
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Aggregate per-seed final weights into a record. `reference` is the
/// quality-like vector the attribution is ranked against.
pub(crate) fn aggregate(
    tree: &Tree,
    point: BTreeMap<String, Value>,
    seeds: &[u64],
    weights: &[WeightState],
    reference: Option<&[f64]>,
    rounds: u64,
) -> Result<SweepRecord> {
    let per_seed_attr: Vec<Vec<f64>> = weights.iter().map(|w| leaf_attribution(tree, w)).collect();
    let n = per_seed_attr.len() as f64;
    let mut mean = vec![0.0; tree.n_leaves()];
    for v in &per_seed_attr {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x / n;
        }
    }
    let extracted: Vec<AttributionResult> = weights.iter().map(|w| AttributionResult::extract(tree, w)).collect();
    let levels = mean_levels(&extracted);
    let mean_weights = WeightState::mean(weights)
        .map(|w| AttributionResult::extract(tree, &w).routers)
        .unwrap_or_default();

    let mut record = SweepRecord {
        point,
        labels: tree.leaf_labels(),
        reference: reference.map(<[f64]>::to_vec),
        rounds_per_seed: rounds,
        mean_weights,
        levels,
        ..Default::default()
    };
    let mut taus = vec![None; seeds.len()];
    if let Some(reference) = reference {
        let agg = metrics::seed_aggregate(&per_seed_attr, reference)?;
        taus = agg.per_seed_tau.clone();
        let defined = taus.iter().flatten().count();
        record.tau_mean = (defined > 0).then_some(agg.tau_mean).and_then(finite);
        record.tau_std = (defined > 1).then_some(agg.tau_std).and_then(finite);
        if let Ok(c) = metrics::kendall_tau(reference, &mean) {
            record.tau_of_mean = Some(c.tau);
            record.rho_of_mean = finite(c.rho);
            record.p_value_of_mean = finite(c.p_value);
        }
    }
    record.per_seed = seeds
        .iter()
        .zip(per_seed_attr)
        .zip(taus)
        .map(|((&seed, attribution), tau)| SeedRecord { seed, attribution, tau })
        .collect();
    record.mean_attribution = mean;
    Ok(record)
}

fn mean_levels(results: &[AttributionResult]) -> Vec<Vec<LabelledMass>> {
    let Some(first) = results.first() else {
        return Vec::new();
    };
    let n = results.len() as f64;
    first
        .levels
        .iter()
        .enumerate()
        .map(|(k, level)| {
            level
                .iter()
                .enumerate()
                .map(|(i, m)| LabelledMass {
                    label: m.label.clone(),
                    mass: results.iter().map(|r| r.levels[k][i].mass).sum::<f64>() / n,
                })
                .collect()
        })
        .collect()
}

pub(crate) fn point<const N: usize>(entries: [(&str, Value); N]) -> BTreeMap<String, Value> {
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

pub(crate) fn tau_points(curve: &str, x: f64, record: &SweepRecord) -> Vec<PlotPoint> {
    record
        .per_seed
        .iter()
        .filter_map(|s| {
            s.tau.map(|tau| PlotPoint {
                curve: curve.to_string(),
                x,
                y: tau,
                seed: Some(s.seed),
            })
        })
        .collect()
}

/// Qualities from the config, or from the spec's leaves.
pub(crate) fn resolve_qualities(spec: &HierarchySpec, given: &Option<Vec<f64>>, tree: &Tree) -> Result<Vec<f64>> {
    let q = match given {
        Some(q) => q.clone(),
        None => spec
            .leaf_qualities()
            .ok_or_else(|| Error::Scenario("no qualities given and the hierarchy does not declare them".into()))?,
    };
    Ok(crate::hierarchy::QualityVector::for_tree(q, tree)?.as_slice().to_vec())
}
