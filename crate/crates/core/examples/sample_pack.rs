//! Regenerates the sample data pack under `data/`.
//!
//! ```text
//! cargo run -p hierattr-core --example sample_pack -- data
//! ```

use std::path::{Path, PathBuf};

use hierattr_core::baselines::SubsetValueTable;
use hierattr_core::dataio::{self, DeployedRoute};
use hierattr_core::hierarchy::balanced_spec;
use hierattr_core::metrics::DiagnosticRow;
use hierattr_core::rng::{stream, SCENARIO_STREAM};
use hierattr_core::scenarios::tiered18;
use hierattr_core::substrate::{self, OutcomeProvider, SubstrateConfig};
use hierattr_core::{HierarchySpec, QualityVector, Tree};
use rand::seq::SliceRandom;

const TOOLS: [&str; 5] = [
    "qwen3-coder-480b",
    "gpt-oss-120b",
    "deepseek-v3.2",
    "qwen3-32b",
    "qwen2.5-14b-instruct-1m",
];

/// Two-orchestrator detail on the LCB cell, in `TOOLS` order.
const QWEN_ROUTING: [f64; 5] = [0.12, 0.42, 0.18, 0.13, 0.15];
const QWEN_SHAP: [f64; 5] = [0.20, 0.34, 0.23, -0.09, -0.03];
const GLM_SHAP: [f64; 5] = [0.19, 0.29, 0.26, -0.07, -0.11];

/// Pooled standalone pass rates on the 100-problem LCB slice.
const LCB_PASS_RATES: [f64; 5] = [0.54, 0.92, 0.60, 0.0, 0.0];

/// GLM deployed trace: (tool, routes, passes). 100 routes, 59 passes.
const GLM_TRACE: [(&str, usize, usize); 5] = [
    ("deepseek-v3.2", 69, 46),
    ("gpt-oss-120b", 18, 10),
    ("qwen3-32b", 5, 2),
    ("qwen2.5-14b-instruct-1m", 5, 1),
    ("qwen3-coder-480b", 3, 0),
];

const BENCHMARKS: [&str; 7] = ["CC", "LCB", "MBPP", "BCB", "EvP", "MMLU", "MATH"];

/// Per driver: (tau, top tool, top share, top is best) for each benchmark.
type Cell = (f64, &'static str, f64, bool);
const DIAGNOSTICS: [(&str, [Cell; 7]); 5] = [
    (
        "deepseek-v3.2",
        [
            (0.20, "deepseek-v3.2", 0.91, false),
            (0.20, "deepseek-v3.2", 0.66, false),
            (0.40, "gpt-oss-120b", 0.50, false),
            (-0.40, "qwen3-coder-480b", 0.79, false),
            (0.20, "gpt-oss-120b", 0.66, false),
            (0.20, "gpt-oss-120b", 0.85, true),
            (-0.20, "gpt-oss-120b", 0.81, true),
        ],
    ),
    (
        "glm-5.1-fp8",
        [
            (-0.40, "deepseek-v3.2", 0.67, false),
            (0.40, "deepseek-v3.2", 0.69, false),
            (-0.40, "qwen2.5-14b-instruct-1m", 0.41, false),
            (-0.20, "qwen3-coder-480b", 0.65, true),
            (0.20, "gpt-oss-120b", 0.54, true),
            (0.80, "gpt-oss-120b", 0.52, true),
            (0.00, "qwen3-32b", 0.62, false),
        ],
    ),
    (
        "qwen3.6-35b-a3b",
        [
            (-0.20, "deepseek-v3.2", 0.48, false),
            (0.60, "gpt-oss-120b", 0.45, true),
            (0.40, "gpt-oss-120b", 0.65, true),
            (-0.40, "qwen3-coder-480b", 0.58, false),
            (0.00, "gpt-oss-120b", 0.59, false),
            (0.40, "gpt-oss-120b", 0.68, false),
            (-0.80, "gpt-oss-120b", 0.67, false),
        ],
    ),
    (
        "qwen2.5-32b-instruct",
        [
            (0.00, "deepseek-v3.2", 0.59, false),
            (1.00, "qwen3-coder-480b", 0.39, false),
            (0.11, "qwen3-coder-480b", 0.41, false),
            (-0.22, "qwen3-coder-480b", 1.00, true),
            (-0.40, "qwen3-coder-480b", 0.62, false),
            (0.36, "qwen3-32b", 0.98, false),
            (0.36, "qwen3-32b", 0.94, false),
        ],
    ),
    (
        "devstral-small-2-24b",
        [
            (0.20, "deepseek-v3.2", 0.83, false),
            (0.60, "deepseek-v3.2", 0.57, false),
            (0.40, "gpt-oss-120b", 0.69, true),
            (-0.32, "qwen3-coder-480b", 0.67, false),
            (-0.40, "gpt-oss-120b", 0.86, false),
            (0.11, "qwen2.5-14b-instruct-1m", 0.50, false),
            (-0.60, "gpt-oss-120b", 0.50, false),
        ],
    ),
];

fn labelled(values: &[f64]) -> Vec<(String, f64)> {
    TOOLS
        .iter()
        .map(|t| t.to_string())
        .zip(values.iter().copied())
        .collect()
}

/// Additive lattice with values rounded to the published precision.
fn additive_table(phi: &[f64]) -> SubsetValueTable {
    let labels: Vec<String> = TOOLS.iter().map(|t| t.to_string()).collect();
    let exact = SubsetValueTable::additive(labels.clone(), phi).expect("five tools");
    let mut table = SubsetValueTable::new(labels).expect("five tools");
    for (mask, v) in exact.entries() {
        table.insert(mask, (v * 100.0).round() / 100.0).expect("fresh mask");
    }
    table
}

fn glm_trace() -> Vec<DeployedRoute> {
    let mut routes: Vec<(&str, bool)> = GLM_TRACE
        .iter()
        .flat_map(|&(tool, n, pass)| (0..n).map(move |i| (tool, i < pass)))
        .collect();
    routes.shuffle(&mut stream(51, SCENARIO_STREAM));
    routes
        .into_iter()
        .enumerate()
        .map(|(i, (tool, outcome))| DeployedRoute {
            problem: format!("lcb{i:03}"),
            tool: tool.to_string(),
            outcome,
        })
        .collect()
}

fn diagnostic_rows() -> Vec<DiagnosticRow> {
    DIAGNOSTICS
        .iter()
        .flat_map(|(driver, cells)| {
            BENCHMARKS
                .iter()
                .zip(cells)
                .map(move |(bench, &(tau, top, share, best))| DiagnosticRow {
                    driver: driver.to_string(),
                    benchmark: bench.to_string(),
                    tau,
                    top_share: share,
                    top_equals_best: best,
                    top_label: top.to_string(),
                })
        })
        .collect()
}

/// Final weights of one seeded run on a balanced tree, with its spec.
fn snapshot(
    root: &Path,
    name: &str,
    branching: &[usize],
    qualities: Vec<f64>,
    rounds: u64,
) -> hierattr_core::Result<()> {
    let spec = balanced_spec(branching)?;
    let tree = Tree::from_spec(&spec)?;
    let provider = OutcomeProvider::Bernoulli(QualityVector::for_tree(qualities, &tree)?);
    let out = substrate::run(&tree, &provider, &SubstrateConfig::default().with_rounds(rounds))?;
    dataio::write_hierarchy_spec(&root.join(format!("hierarchies/{name}.json")), &spec)?;
    dataio::write_weight_snapshot(&root.join(format!("snapshots/{name}.json")), &tree, &out.weights)
}

fn main() -> hierattr_core::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    let at = |p: &str| -> PathBuf { root.join(p) };

    let (matrix, spec) = tiered18(880, 0.1, 0)?;
    dataio::write_pass_matrix(&at("matrices/tiered18.csv"), &matrix)?;
    dataio::write_hierarchy_spec(&at("hierarchies/tiered18.json"), &spec)?;

    let arch = HierarchySpec::grouped(&[("moe", TOOLS[..3].to_vec()), ("dense", TOOLS[3..].to_vec())]);
    dataio::write_hierarchy_spec(&at("hierarchies/tools_moe_dense.json"), &arch)?;

    let qwen: &Path = &at("cells/qwen3.6-lcb");
    dataio::write_attribution(&qwen.join("routing.csv"), &labelled(&QWEN_ROUTING))?;
    dataio::write_subset_table(&qwen.join("subset_table.csv"), &additive_table(&QWEN_SHAP))?;
    dataio::write_quality_table(&qwen.join("pass_rates.csv"), &labelled(&LCB_PASS_RATES))?;

    let glm: &Path = &at("cells/glm-5.1-lcb");
    dataio::write_deployed_trace(&glm.join("trace.csv"), &glm_trace())?;
    dataio::write_subset_table(&glm.join("subset_table.csv"), &additive_table(&GLM_SHAP))?;
    dataio::write_quality_table(&glm.join("pass_rates.csv"), &labelled(&LCB_PASS_RATES))?;

    snapshot(
        &root,
        "balanced_3x3",
        &[3, 3],
        vec![0.9, 0.5, 0.3, 0.6, 0.6, 0.4, 0.2, 0.3, 0.1],
        30_000,
    )?;
    let spaced: Vec<f64> = (0..81).map(|j| 0.1 + 0.8 * j as f64 / 80.0).collect();
    snapshot(&root, "balanced_3x3x3x3", &[3, 3, 3, 3], spaced, 120_000)?;

    dataio::write_diagnostics(&at("diagnostics/multi_driver_cells.csv"), &diagnostic_rows())?;
    Ok(())
}
