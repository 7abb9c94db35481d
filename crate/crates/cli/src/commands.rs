//! Subcommand definitions and their implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use hierattr_core::baselines::{
    shap_exact, shap_from_table, shap_permutation, CoalitionKind, ShapResult, DEFAULT_EXACT_LIMIT,
};
use hierattr_core::dataio::{self, PlotPoint};
use hierattr_core::metrics::{self, cell_diagnostic, kendall_tau, partition_delta};
use hierattr_core::scenarios::{
    cell_pipeline, config_from_value, parse_config_value, pruning_scenario, run_scenario, set_override, set_sweep,
    ScenarioConfig, SubstrateParams,
};
use hierattr_core::{equilibrium_weights, AttributionResult, Error, Tree};
use serde::Serialize;
use serde_json::{json, Value};

use crate::output::{
    out_dir, parse_assignment, reals_arg, seeds_arg, CliResult, ErrorKind, Failure, Manifest, Reals, Seeds,
};

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario config.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Replace a list-valued field, e.g. `noise=0,0.1,0.3`. Repeatable.
        #[arg(long, value_parser = parse_assignment)]
        sweep: Vec<(String, String)>,
    },
    /// Run a scenario once per point of a grid of scalar overrides.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// One grid axis, e.g. `substrate.eta=0.01,0.05`. Repeatable.
        #[arg(long, value_parser = parse_assignment, required = true)]
        grid: Vec<(String, String)>,
    },
    /// Per-level attribution tables from a weight snapshot.
    Attribute {
        snapshot: PathBuf,
        /// Hierarchy spec the snapshot belongs to.
        #[arg(long)]
        tree: PathBuf,
        /// `all` or a level between 1 and the tree depth.
        #[arg(long, default_value = "all")]
        level: String,
    },
    /// Shapley values of a pass matrix.
    Shap {
        matrix: PathBuf,
        #[arg(long, default_value = "or")]
        kind: CoalitionKind,
        /// Permutations per problem.
        #[arg(long, default_value_t = 500, conflicts_with = "exact")]
        perms: usize,
        /// Enumerate every coalition instead of sampling.
        #[arg(long)]
        exact: bool,
        #[arg(long, default_value_t = DEFAULT_EXACT_LIMIT)]
        exact_limit: usize,
        /// Permutation seeds; the reported values are their mean.
        #[arg(long, default_value = "0", value_parser = seeds_arg)]
        seeds: Seeds,
    },
    /// Rank agreement between two attribution tables.
    Compare { a: PathBuf, b: PathBuf },
    /// Coverage curves for four removal orders.
    Prune {
        matrix: PathBuf,
        attribution: PathBuf,
        /// Random removal orders to average.
        #[arg(long, default_value_t = 100)]
        random: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Closed-form equilibrium weights of one router.
    Equilibrium {
        /// Child qualities, comma separated.
        #[arg(value_parser = reals_arg)]
        qualities: Reals,
        /// Fail with the numerical-guard code when the equilibrium is not interior.
        #[arg(long)]
        require_interior: bool,
    },
    /// Routing attribution against Shapley values from a recorded lattice.
    CellDiagnostic(CellArgs),
}

/// Flags that mirror config fields.
#[derive(Debug, Args)]
pub struct Overrides {
    /// Set any config field by dotted key, e.g. `substrate.eta=0.1`. Repeatable.
    #[arg(long, value_parser = parse_assignment)]
    set: Vec<(String, String)>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// `0..20`, `7` or `1,2,5`.
    #[arg(long, value_parser = seeds_arg)]
    seeds: Option<Seeds>,
    #[arg(long)]
    rounds: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CellArgs {
    /// Subset value table covering every non-empty tool subset.
    #[arg(long, required_unless_present = "summary")]
    table: Option<PathBuf>,
    /// Deployed trace; replayed through the substrate when `--tree` is given.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, requires = "trace")]
    tree: Option<PathBuf>,
    /// Precomputed routing attribution instead of a replay.
    #[arg(long, conflicts_with = "tree")]
    routing: Option<PathBuf>,
    /// Standalone per-tool pass rates.
    #[arg(long)]
    pass_rates: Option<PathBuf>,
    /// Replay rounds; defaults to the trace length.
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long, default_value = "0..20", value_parser = seeds_arg)]
    seeds: Seeds,
    #[arg(long, default_value_t = 0.05)]
    eta: f64,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value = "")]
    driver: String,
    #[arg(long, default_value = "")]
    benchmark: String,
    /// Cell diagnostics table: report the top-equals-best partition instead.
    #[arg(long, conflicts_with_all = ["table", "trace", "routing"])]
    summary: Option<PathBuf>,
}

pub fn dispatch(command: Command, out: Option<PathBuf>) -> CliResult {
    let out = out.as_deref();
    match command {
        Command::Simulate {
            config,
            overrides,
            sweep,
        } => simulate(&config, &overrides, &sweep, out),
        Command::Sweep {
            config,
            overrides,
            grid,
        } => sweep(&config, &overrides, &grid, out),
        Command::Attribute { snapshot, tree, level } => attribute(&snapshot, &tree, &level, out),
        Command::Shap {
            matrix,
            kind,
            perms,
            exact,
            exact_limit,
            seeds,
        } => shap(&matrix, kind, (!exact).then_some(perms), exact_limit, &seeds.0, out),
        Command::Compare { a, b } => compare(&a, &b, out),
        Command::Prune {
            matrix,
            attribution,
            random,
            seed,
        } => prune(&matrix, &attribution, random, seed, out),
        Command::Equilibrium {
            qualities,
            require_interior,
        } => equilibrium(&qualities.0, require_interior, out),
        Command::CellDiagnostic(args) => cell(&args, out),
    }
}

// ------------------------------------------------------------------ configs

/// Read a config and apply overrides; any failure here is a config error.
fn load_config(path: &Path, overrides: &Overrides, sweeps: &[(String, String)]) -> CliResult<(Value, ScenarioConfig)> {
    let as_config = |e: Error| Failure::config(e);
    let text = dataio::read_text(path).map_err(as_config)?;
    let mut value = parse_config_value(&text, path).map_err(as_config)?;
    apply_overrides(&mut value, overrides).map_err(as_config)?;
    for (key, raw) in sweeps {
        set_sweep(&mut value, key, raw).map_err(as_config)?;
    }
    let config = config_from_value(value.clone())
        .map_err(|e| Failure::config(Error::Scenario(format!("{}: {e}", path.display()))))?;
    Ok((value, config))
}

fn apply_overrides(value: &mut Value, o: &Overrides) -> hierattr_core::Result<()> {
    for (key, raw) in &o.set {
        set_override(value, key, raw)?;
    }
    if let Some(eta) = o.eta {
        set_override(value, "substrate.eta", &eta.to_string())?;
    }
    if let Some(eps) = o.epsilon {
        set_override(value, "substrate.epsilon", &eps.to_string())?;
    }
    if let Some(Seeds(seeds)) = &o.seeds {
        value["seeds"] = json!(seeds);
    }
    if let Some(rounds) = o.rounds {
        // list-valued round schedules take a single shared entry
        value["rounds"] = if value.get("rounds").is_some_and(Value::is_array) {
            json!([rounds])
        } else {
            json!(rounds)
        };
    }
    Ok(())
}

fn base_dir(config: &Path) -> &Path {
    config
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
}

fn simulate(path: &Path, overrides: &Overrides, sweeps: &[(String, String)], out: Option<&Path>) -> CliResult {
    let (value, config) = load_config(path, overrides, sweeps)?;
    let output = run_scenario(&config, base_dir(path))?;
    let dir = out_dir(out, &config.name);
    let mut manifest = Manifest::new("simulate", &[dataio::PLOT_DATA])
        .input("config", path)
        .seeds(&config.seeds);
    manifest.config = Some(value);
    manifest.config_hash = Some(config.hash());
    manifest.write(&dir)?;
    output.write(&dir)?;

    println!("{} ({}) -> {}", config.name, config.kind.name(), dir.display());
    for r in &output.result.records {
        let point = if r.point.is_empty() {
            String::new()
        } else {
            format!("{} ", Value::from(serde_json::Map::from_iter(r.point.clone())))
        };
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!(
            "  {point}tau {} +/- {}  seed-averaged tau {}",
            fmt(r.tau_mean),
            fmt(r.tau_std),
            fmt(r.tau_of_mean)
        );
    }
    for note in &output.result.notes {
        println!("  note: {note}");
    }
    Ok(())
}

/// Cartesian product of the grid axes, in axis order.
fn grid_points(grid: &[(String, String)]) -> Vec<Vec<(String, String)>> {
    let mut points = vec![Vec::new()];
    for (key, raw) in grid {
        let values: Vec<&str> = raw.split(',').map(str::trim).collect();
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((key.clone(), v.to_string()));
                    q
                })
            })
            .collect();
    }
    points
}

fn slug(point: &[(String, String)]) -> String {
    point
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join("_")
        .replace(['/', '\\', ' '], "-")
}

fn sweep(path: &Path, overrides: &Overrides, grid: &[(String, String)], out: Option<&Path>) -> CliResult {
    let (base_value, base_config) = load_config(path, overrides, &[])?;
    if let Some((key, raw)) = grid.iter().find(|(_, raw)| raw.split(',').any(|v| v.trim().is_empty())) {
        return Err(Failure::config(Error::Scenario(format!(
            "empty value in grid `{key}={raw}`"
        ))));
    }
    let points = grid_points(grid);
    let mut runs = Vec::with_capacity(points.len());
    for point in &points {
        let mut value = base_value.clone();
        for (key, raw) in point {
            set_override(&mut value, key, raw).map_err(Failure::config)?;
        }
        let config = config_from_value(value.clone()).map_err(Failure::config)?;
        let output = run_scenario(&config, base_dir(path))?;
        runs.push((point, value, config, output));
    }

    let dir = out_dir(out, &format!("{}-sweep", base_config.name));
    let mut manifest = Manifest::new("sweep", &[dataio::PLOT_DATA])
        .input("config", path)
        .seeds(&base_config.seeds);
    manifest.config = Some(json!({
        "base": base_value,
        "grid": grid.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect::<serde_json::Map<_, _>>(),
    }));
    manifest.write(&dir)?;

    let mut table = csv_header(grid);
    for (point, value, config, output) in &runs {
        let sub = dir.join(slug(point));
        let mut m = Manifest::new("sweep", &[dataio::PLOT_DATA])
            .input("config", path)
            .seeds(&config.seeds);
        m.config = Some(value.clone());
        m.config_hash = Some(config.hash());
        m.write(&sub)?;
        output.write(&sub)?;
        for r in &output.result.records {
            let mut row: Vec<String> = point.iter().map(|(_, v)| v.clone()).collect();
            row.push(Value::from(serde_json::Map::from_iter(r.point.clone())).to_string());
            for x in [r.tau_mean, r.tau_std, r.tau_of_mean] {
                row.push(x.map_or(String::new(), |v| v.to_string()));
            }
            table.push(row);
        }
        println!("{} -> {}", slug(point), sub.display());
    }
    write_csv(&dir.join("sweep.csv"), &table)?;
    Ok(())
}

fn csv_header(grid: &[(String, String)]) -> Vec<Vec<String>> {
    let mut header: Vec<String> = grid.iter().map(|(k, _)| k.clone()).collect();
    header.extend(["record", "tau_mean", "tau_std", "tau_of_mean"].map(String::from));
    vec![header]
}

fn write_csv(path: &Path, rows: &[Vec<String>]) -> CliResult {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.write_record(r).expect("in-memory csv write");
    }
    let text = String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("utf-8 fields");
    dataio::write_text(path, &text)?;
    Ok(())
}

// --------------------------------------------------------------- analyses

fn attribute(snapshot: &Path, tree_path: &Path, level: &str, out: Option<&Path>) -> CliResult {
    let spec = dataio::read_hierarchy_spec(tree_path)?;
    let tree = Tree::from_spec(&spec)?;
    let weights = dataio::read_weight_snapshot(snapshot, &tree)?;
    let result = AttributionResult::extract(&tree, &weights);
    let levels: Vec<usize> = match level {
        "all" => (1..=tree.depth()).collect(),
        k => {
            let k: usize = k.parse().map_err(|_| {
                Failure::config(Error::InvalidConfig(format!(
                    "--level must be `all` or an integer, found `{k}`"
                )))
            })?;
            if k == 0 || k > tree.depth() {
                return Err(Error::LevelOutOfRange {
                    level: k,
                    depth: tree.depth(),
                }
                .into());
            }
            vec![k]
        }
    };

    let dir = out_dir(out, "attribute");
    Manifest::new(
        "attribute",
        &[
            dataio::WEIGHT_SNAPSHOT,
            dataio::HIERARCHY_SPEC,
            dataio::ATTRIBUTION_TABLE,
        ],
    )
    .input("snapshot", snapshot)
    .input("tree", tree_path)
    .write(&dir)?;
    for k in levels {
        let rows: Vec<(String, f64)> = result.levels[k - 1].iter().map(|m| (m.label.clone(), m.mass)).collect();
        dataio::write_attribution(&dir.join(format!("level_{k}.csv")), &rows)?;
        println!("level {k}");
        for (label, mass) in &rows {
            println!("  {label:<24} {mass:.6}");
        }
    }
    let leaves: Vec<(String, f64)> = result.leaf.iter().map(|m| (m.label.clone(), m.mass)).collect();
    dataio::write_attribution(&dir.join("leaves.csv"), &leaves)?;
    Ok(())
}

#[derive(Serialize)]
struct ShapDocument<'a> {
    format: &'static str,
    version: u32,
    kind: CoalitionKind,
    problems: usize,
    components: usize,
    evaluations: u64,
    phi: Vec<(String, f64)>,
    runs: &'a [ShapResult],
}

fn shap(
    matrix_path: &Path,
    kind: CoalitionKind,
    perms: Option<usize>,
    exact_limit: usize,
    seeds: &[u64],
    out: Option<&Path>,
) -> CliResult {
    let m = dataio::read_pass_matrix(matrix_path)?;
    let runs: Vec<ShapResult> = match perms {
        None => vec![shap_exact(&m, kind, exact_limit)?],
        Some(p) => seeds
            .iter()
            .map(|&s| shap_permutation(&m, kind, p, s))
            .collect::<hierattr_core::Result<_>>()?,
    };
    let n = m.n_components();
    let mut phi = vec![0.0; n];
    for r in &runs {
        for (acc, x) in phi.iter_mut().zip(&r.phi) {
            *acc += x / runs.len() as f64;
        }
    }
    let rows: Vec<(String, f64)> = m.components().iter().cloned().zip(phi).collect();
    let evaluations = runs.iter().map(|r| r.evaluations).sum();

    let dir = out_dir(out, &format!("shap-{}", kind.name()));
    Manifest::new("shap", &[dataio::PASS_MATRIX, dataio::ATTRIBUTION_TABLE])
        .input("matrix", matrix_path)
        .seeds(if perms.is_some() { seeds } else { &[] })
        .write(&dir)?;
    dataio::write_attribution(&dir.join("shap.csv"), &rows)?;
    dataio::write_json(
        &dir.join("shap.json"),
        &ShapDocument {
            format: "shap-result",
            version: 1,
            kind,
            problems: m.n_problems(),
            components: n,
            evaluations,
            phi: rows.clone(),
            runs: &runs,
        },
    )?;
    for (label, v) in &rows {
        println!("{label:<28} {v:+.6}");
    }
    println!("evaluations {evaluations}");
    Ok(())
}

fn compare(a: &Path, b: &Path, out: Option<&Path>) -> CliResult {
    let ra = dataio::read_attribution(a)?;
    let rb = dataio::read_attribution(b)?;
    let labels: Vec<String> = ra.iter().map(|(l, _)| l.clone()).collect();
    let va: Vec<f64> = ra.iter().map(|(_, v)| *v).collect();
    let vb = dataio::align_to_labels(&rb, &labels)?;
    let cmp = kendall_tau(&va, &vb)?;

    let dir = out_dir(out, "compare");
    Manifest::new("compare", &[dataio::ATTRIBUTION_TABLE])
        .input("a", a)
        .input("b", b)
        .write(&dir)?;
    dataio::write_json(&dir.join("compare.json"), &cmp)?;
    println!(
        "tau {:+.4}  p {:.4}  rho {:+.4}  n {}",
        cmp.tau, cmp.p_value, cmp.rho, cmp.n
    );
    Ok(())
}

fn prune(matrix_path: &Path, attribution: &Path, random: usize, seed: u64, out: Option<&Path>) -> CliResult {
    let m = dataio::read_pass_matrix(matrix_path)?;
    let attr = dataio::read_attribution(attribution)?;
    let set = pruning_scenario(&m, &attr, random, seed)?;

    let dir = out_dir(out, "prune");
    Manifest::new(
        "prune",
        &[dataio::PASS_MATRIX, dataio::ATTRIBUTION_TABLE, dataio::PLOT_DATA],
    )
    .input("matrix", matrix_path)
    .input("attribution", attribution)
    .seeds(&[seed])
    .write(&dir)?;
    let mut plot = Vec::new();
    let mut aupc = BTreeMap::new();
    for (name, report) in set.reports() {
        for (&r, &c) in report.remaining.iter().zip(&report.coverage) {
            plot.push(PlotPoint {
                curve: name.to_string(),
                x: r as f64,
                y: c,
                seed: None,
            });
        }
        aupc.insert(name, report.aupc);
        println!("{name:<20} AUPC {:.4}", report.aupc);
    }
    dataio::write_plot_data(&dir.join("curves.csv"), &plot)?;
    dataio::write_json(&dir.join("pruning.json"), &json!({ "aupc": aupc, "strategies": set }))?;
    Ok(())
}

fn equilibrium(qualities: &[f64], require_interior: bool, out: Option<&Path>) -> CliResult {
    let eq = equilibrium_weights(qualities)?;
    let dir = out_dir(out, "equilibrium");
    let mut manifest = Manifest::new("equilibrium", &[]);
    manifest.config = Some(json!({ "qualities": qualities, "require_interior": require_interior }));
    manifest.write(&dir)?;
    dataio::write_json(&dir.join("equilibrium.json"), &eq)?;

    let w: Vec<String> = eq.weights.iter().map(|x| format!("{x:.6}")).collect();
    println!("w* = ({})", w.join(", "));
    println!("c  = {:.6}", eq.c);
    println!("interior: {}", if eq.interior { "yes" } else { "no" });
    if require_interior && !eq.interior {
        return Err(Error::NumericalGuard(format!("qualities {qualities:?} violate the interiority condition")).into());
    }
    Ok(())
}

fn cell(args: &CellArgs, out: Option<&Path>) -> CliResult {
    if let Some(summary) = &args.summary {
        let rows = dataio::read_diagnostics(summary)?;
        let delta = partition_delta(&rows);
        let dir = out_dir(out, "cell-summary");
        Manifest::new("cell-diagnostic", &[dataio::CELL_DIAGNOSTICS])
            .input("summary", summary)
            .write(&dir)?;
        dataio::write_json(&dir.join("partition.json"), &delta)?;
        let fmt = |x: Option<f64>| x.map_or("-".into(), |v| format!("{v:+.3}"));
        println!(
            "top = best      mean tau {} (n = {})",
            fmt(delta.mean_top_best),
            delta.n_top_best
        );
        println!(
            "top != best     mean tau {} (n = {})",
            fmt(delta.mean_top_not_best),
            delta.n_top_not_best
        );
        println!("delta           {}", fmt(delta.delta));
        return Ok(());
    }

    let table_path = args.table.as_deref().expect("clap requires --table without --summary");
    let table = dataio::read_subset_table(table_path)?;
    let pass_rates = args.pass_rates.as_deref().map(dataio::read_quality_table).transpose()?;
    let routes = args.trace.as_deref().map(dataio::read_deployed_trace).transpose()?;
    let dir = out_dir(out, "cell-diagnostic");
    let mut manifest =
        Manifest::new("cell-diagnostic", &[dataio::SUBSET_TABLE, dataio::DEPLOYED_TRACE]).input("table", table_path);
    for (name, p) in [
        ("trace", &args.trace),
        ("tree", &args.tree),
        ("routing", &args.routing),
        ("pass_rates", &args.pass_rates),
    ] {
        if let Some(p) = p {
            manifest = manifest.input(name, p);
        }
    }

    let shap = shap_from_table(&table)?;
    let shap_rows: Vec<(String, f64)> = shap.labels.iter().cloned().zip(shap.phi.iter().copied()).collect();
    let document = match (&args.tree, &args.routing, &routes) {
        (Some(tree_path), _, Some(routes)) => {
            let spec = dataio::read_hierarchy_spec(tree_path)?;
            let params = SubstrateParams {
                eta: args.eta,
                epsilon: args.epsilon,
            };
            let report = cell_pipeline(
                routes,
                &table,
                &spec,
                pass_rates.as_deref(),
                &params,
                args.rounds,
                &args.seeds.0,
            )?;
            manifest = manifest.seeds(&args.seeds.0);
            print_cell(
                &report.diagnostic.routing,
                &report.diagnostic.tools,
                &shap_rows,
                report.diagnostic.tau,
            );
            println!(
                "top pick {} ({:.2} of routes), top = best: {}",
                report.diagnostic.top_pick, report.diagnostic.top_share, report.diagnostic.top_equals_best
            );
            println!("note: {}", report.note);
            let row = report.diagnostic.to_row(&args.driver, &args.benchmark);
            dataio::write_diagnostics(&dir.join("diagnostic.csv"), std::slice::from_ref(&row))
                .map_err(Failure::from)?;
            serde_json::to_value(&report).expect("serializable report")
        }
        (None, Some(routing_path), _) => {
            let routing = dataio::read_attribution(routing_path)?;
            match (&routes, &pass_rates) {
                (Some(routes), Some(rates)) => {
                    let picks: Vec<String> = routes.iter().map(|r| r.tool.clone()).collect();
                    let d = cell_diagnostic(&picks, &routing, &shap_rows, rates)?;
                    print_cell(&d.routing, &d.tools, &shap_rows, d.tau);
                    println!(
                        "top pick {} ({:.2} of routes), top = best: {}",
                        d.top_pick, d.top_share, d.top_equals_best
                    );
                    let row = d.to_row(&args.driver, &args.benchmark);
                    dataio::write_diagnostics(&dir.join("diagnostic.csv"), std::slice::from_ref(&row))
                        .map_err(Failure::from)?;
                    serde_json::to_value(&d).expect("serializable diagnostic")
                }
                _ => {
                    let labels: Vec<String> = routing.iter().map(|(l, _)| l.clone()).collect();
                    let r: Vec<f64> = routing.iter().map(|(_, v)| *v).collect();
                    let s = dataio::align_to_labels(&shap_rows, &labels)?;
                    let tau = metrics::tau_b(&r, &s)?;
                    print_cell(&r, &labels, &shap_rows, tau);
                    json!({ "tools": labels, "routing": r, "shap": s, "tau": tau })
                }
            }
        }
        _ => {
            return Err(Failure {
                kind: ErrorKind::Config,
                error: Error::InvalidConfig("cell-diagnostic needs --trace with --tree, or --routing".into()),
            })
        }
    };
    manifest.write(&dir)?;
    dataio::write_json(&dir.join("diagnostic.json"), &document)?;
    Ok(())
}

fn print_cell(routing: &[f64], tools: &[String], shap: &[(String, f64)], tau: f64) {
    for (tool, r) in tools.iter().zip(routing) {
        let s = shap.iter().find(|(l, _)| l == tool).map_or(f64::NAN, |(_, v)| *v);
        println!("{tool:<28} routing {r:.4}  shap {s:+.4}");
    }
    println!("tau(routing, shap) = {tau:+.2}");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_cartesian_in_axis_order() {
        let grid = vec![
            ("a".to_string(), "1,2".to_string()),
            ("b".to_string(), "x,y,z".to_string()),
        ];
        let points = grid_points(&grid);
        assert_eq!(points.len(), 6);
        assert_eq!(slug(&points[0]), "a=1_b=x");
        assert_eq!(slug(&points[5]), "a=2_b=z");
    }

    #[test]
    fn rounds_override_keeps_list_shape() {
        let o = Overrides {
            set: vec![],
            eta: Some(0.1),
            epsilon: None,
            seeds: Some(Seeds(vec![1, 2])),
            rounds: Some(50),
        };
        let mut v = json!({"rounds": [10, 20], "substrate": {}});
        apply_overrides(&mut v, &o).unwrap();
        assert_eq!(v["rounds"], json!([50]));
        assert_eq!(v["seeds"], json!([1, 2]));
        assert_eq!(v["substrate"]["eta"], json!(0.1));

        let mut v = json!({"rounds": 10});
        apply_overrides(&mut v, &o).unwrap();
        assert_eq!(v["rounds"], json!(50));
    }
}
