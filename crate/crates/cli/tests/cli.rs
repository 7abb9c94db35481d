use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn hierattr(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hierattr"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("HIERATTR_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn error_record(o: &Output) -> Value {
    let err = String::from_utf8_lossy(&o.stderr);
    let line = err.lines().last().expect("error record on stderr");
    serde_json::from_str(line).expect("error record is JSON")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_manifest_result_and_plot() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("exp1");
    let cfg = data("configs/exp1_ground_truth.json");
    let o = hierattr(
        &["simulate", cfg.to_str().unwrap(), "--rounds", "2000", "--seeds", "0..3"],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["format"], "run-manifest");
    assert_eq!(manifest["seeds"], serde_json::json!([0, 1, 2]));
    assert_eq!(manifest["config"]["rounds"], 2000);
    let result = json(&out.join("result.json"));
    assert_eq!(result["kind"], "ground-truth");
    assert!(result["records"][0]["tau_mean"].is_number());
    assert!(out.join("plot.csv").exists());
}

#[test]
fn simulate_sweep_replaces_noise_axis() {
    let tmp = TempDir::new().unwrap();
    let cfg = data("configs/exp9_noise_sweep.json");
    let o = hierattr(
        &[
            "simulate",
            cfg.to_str().unwrap(),
            "--sweep",
            "noise=0,0.1,0.3,0.45",
            "--rounds",
            "1000",
            "--seeds",
            "0..2",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let result = json(&tmp.path().join("result.json"));
    assert_eq!(result["records"].as_array().unwrap().len(), 4);
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = data("configs/exp10_per_context.json");
    let args = ["simulate", cfg.to_str().unwrap(), "--rounds", "1500", "--seeds", "0..3"];
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(hierattr(&args, &a).status.success());
    assert!(hierattr(&args, &b).status.success());
    for f in ["result.json", "plot.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn missing_config_is_a_config_error_without_output() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("never");
    let o = hierattr(&["simulate", "/nonexistent/cfg.json"], &out);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["error"]["kind"], "config");
    assert!(!out.exists());
}

#[test]
fn bad_override_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = data("configs/exp1_ground_truth.json");
    let o = hierattr(&["simulate", cfg.to_str().unwrap(), "--eta", "1.5"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_runs_every_grid_point() {
    let tmp = TempDir::new().unwrap();
    let cfg = data("configs/exp1_ground_truth.json");
    let o = hierattr(
        &[
            "sweep",
            cfg.to_str().unwrap(),
            "--grid",
            "substrate.eta=0.02,0.05",
            "--grid",
            "rounds=500,1000",
            "--seeds",
            "0..2",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(tmp.path().join("substrate.eta=0.05_rounds=1000/result.json").exists());
}

#[test]
fn attribute_levels() {
    let tmp = TempDir::new().unwrap();
    let snap = data("snapshots/balanced_3x3x3x3.json");
    let tree = data("hierarchies/balanced_3x3x3x3.json");
    let o = hierattr(
        &["attribute", snap.to_str().unwrap(), "--tree", tree.to_str().unwrap()],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for k in 1..=4 {
        assert!(tmp.path().join(format!("level_{k}.csv")).exists());
    }

    let o = hierattr(
        &[
            "attribute",
            snap.to_str().unwrap(),
            "--tree",
            tree.to_str().unwrap(),
            "--level",
            "99",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn attribute_rejects_mismatched_tree() {
    let tmp = TempDir::new().unwrap();
    let snap = data("snapshots/balanced_3x3.json");
    let tree = data("hierarchies/balanced_3x3x3x3.json");
    let o = hierattr(
        &["attribute", snap.to_str().unwrap(), "--tree", tree.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn shap_counts_evaluations() {
    let tmp = TempDir::new().unwrap();
    let m = data("matrices/tiered18.csv");
    let o = hierattr(&["shap", m.to_str().unwrap(), "--perms", "20"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains(&format!("evaluations {}", 880 * 20 * 18)));
    let doc = json(&tmp.path().join("shap.json"));
    assert_eq!(doc["evaluations"], 880 * 20 * 18);
}

#[test]
fn shap_exact_toy_and_limit() {
    let tmp = TempDir::new().unwrap();
    let m = tmp.path().join("toy.csv");
    std::fs::write(&m, "id,a,b\np1,1,0\np2,1,1\n").unwrap();
    let o = hierattr(&["shap", m.to_str().unwrap(), "--exact"], &tmp.path().join("o"));
    assert!(o.status.success());
    let doc = json(&tmp.path().join("o/shap.json"));
    // p1: a gets 1; p2: split 1/2 each. Mean over problems.
    assert_eq!(doc["phi"][0][1], 0.75);
    assert_eq!(doc["phi"][1][1], 0.25);

    let o = hierattr(
        &["shap", m.to_str().unwrap(), "--exact", "--exact-limit", "1"],
        &tmp.path().join("p"),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_reports_tau() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a.csv");
    let b = tmp.path().join("b.csv");
    std::fs::write(&a, "label,value\nx,0.5\ny,0.3\nz,0.2\n").unwrap();
    std::fs::write(&b, "label,value\nz,0.1\ny,0.2\nx,0.7\n").unwrap();
    let o = hierattr(
        &["compare", a.to_str().unwrap(), b.to_str().unwrap()],
        &tmp.path().join("o"),
    );
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("tau +1.0000"));

    std::fs::write(&b, "label,value\nw,0.1\ny,0.2\nx,0.7\n").unwrap();
    let o = hierattr(
        &["compare", a.to_str().unwrap(), b.to_str().unwrap()],
        &tmp.path().join("p"),
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn prune_reports_four_strategies() {
    let tmp = TempDir::new().unwrap();
    let m = data("matrices/tiered18.csv");
    let attr = tmp.path().join("rates.csv");
    // pass rates as the attribution: guided equals oracle
    let text = std::fs::read_to_string(&m).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').skip(1).collect();
    let mut sums = vec![0u32; header.len()];
    for l in lines {
        for (s, c) in sums.iter_mut().zip(l.split(',').skip(1)) {
            *s += c.parse::<u32>().unwrap();
        }
    }
    let body: String = header.iter().zip(&sums).map(|(h, s)| format!("{h},{s}\n")).collect();
    std::fs::write(&attr, format!("label,value\n{body}")).unwrap();
    let o = hierattr(
        &["prune", m.to_str().unwrap(), attr.to_str().unwrap(), "--random", "10"],
        &tmp.path().join("o"),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(&tmp.path().join("o/pruning.json"));
    let aupc = &doc["aupc"];
    assert_eq!(aupc.as_object().unwrap().len(), 4);
    assert_eq!(aupc["attribution-guided"], aupc["oracle"]);
}

#[test]
fn equilibrium_verdicts() {
    let tmp = TempDir::new().unwrap();
    let o = hierattr(&["equilibrium", "0.6,0.5,0.4"], tmp.path());
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("interior: yes"), "{s}");

    let o = hierattr(&["equilibrium", "0.9,0.9,0.1", "--require-interior"], tmp.path());
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_record(&o)["error"]["kind"], "numerical-guard");
}

#[test]
fn cell_diagnostic_from_routing_vector() {
    let tmp = TempDir::new().unwrap();
    let o = hierattr(
        &[
            "cell-diagnostic",
            "--table",
            data("cells/qwen3.6-lcb/subset_table.csv").to_str().unwrap(),
            "--routing",
            data("cells/qwen3.6-lcb/routing.csv").to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("tau(routing, shap) = +0.60"));
}

#[test]
fn cell_diagnostic_replays_trace() {
    let tmp = TempDir::new().unwrap();
    let o = hierattr(
        &[
            "cell-diagnostic",
            "--table",
            data("cells/glm-5.1-lcb/subset_table.csv").to_str().unwrap(),
            "--trace",
            data("cells/glm-5.1-lcb/trace.csv").to_str().unwrap(),
            "--tree",
            data("hierarchies/tools_moe_dense.json").to_str().unwrap(),
            "--pass-rates",
            data("cells/glm-5.1-lcb/pass_rates.csv").to_str().unwrap(),
            "--rounds",
            "3000",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("tau(routing, shap) = +0.40"), "{s}");
    assert!(s.contains("top = best: false"));
    assert!(tmp.path().join("diagnostic.csv").exists());
}

#[test]
fn cell_summary_partition() {
    let tmp = TempDir::new().unwrap();
    let rows = data("diagnostics/multi_driver_cells.csv");
    let o = hierattr(&["cell-diagnostic", "--summary", rows.to_str().unwrap()], tmp.path());
    assert!(o.status.success());
    let doc = json(&tmp.path().join("partition.json"));
    assert_eq!(doc["n_top_best"], 9);
    assert_eq!(doc["n_top_not_best"], 26);
}

#[test]
fn incomplete_lattice_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let full = std::fs::read_to_string(data("cells/qwen3.6-lcb/subset_table.csv")).unwrap();
    let truncated: Vec<&str> = full.lines().collect();
    let table = tmp.path().join("t.csv");
    std::fs::write(&table, truncated[..truncated.len() - 1].join("\n")).unwrap();
    let o = hierattr(
        &[
            "cell-diagnostic",
            "--table",
            table.to_str().unwrap(),
            "--routing",
            data("cells/qwen3.6-lcb/routing.csv").to_str().unwrap(),
        ],
        &tmp.path().join("o"),
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn output_env_sets_the_base_directory() {
    let tmp = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_hierattr"))
        .args(["equilibrium", "0.6,0.4"])
        .env("HIERATTR_OUT", tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(tmp.path().join("equilibrium/manifest.json").exists());
}

#[test]
fn usage_errors_use_the_config_code() {
    let tmp = TempDir::new().unwrap();
    let o = hierattr(&["equilibrium", "0.5,abc"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["error"]["kind"], "config");
}
