//! Readers and writers for every on-disk format.
//!
//! Tables are comma-delimited UTF-8 with a header row, optionally preceded
//! by a `#format:<id>:v<version>` line. Writers always emit that line, and
//! readers reject versions they do not know. Structured documents are JSON
//! with `format` and `version` fields. Numbers are written with Rust's
//! shortest round-trip formatting, so reading a canonical file and writing it
//! back reproduces the same bytes.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::baselines::SubsetValueTable;
use crate::error::{Error, Result};
use crate::hierarchy::{HierarchySpec, Tree, WeightState};
use crate::matrix::PassMatrix;
use crate::metrics::DiagnosticRow;
use crate::substrate::RoundRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FormatDescriptor {
    pub id: &'static str,
    pub version: u32,
    /// `None` for JSON documents.
    pub delimiter: Option<char>,
    /// Header contract, as written.
    pub header: &'static str,
}

impl FormatDescriptor {
    fn tag(&self) -> String {
        format!("#format:{}:v{}", self.id, self.version)
    }
}

pub const PASS_MATRIX: FormatDescriptor = FormatDescriptor {
    id: "pass-matrix",
    version: 1,
    delimiter: Some(','),
    header: "id,<component>...",
};
pub const SUBSET_TABLE: FormatDescriptor = FormatDescriptor {
    id: "subset-table",
    version: 1,
    delimiter: Some(','),
    header: "labels,<label>...\\nsubset,value",
};
pub const QUALITY_TABLE: FormatDescriptor = FormatDescriptor {
    id: "quality-table",
    version: 1,
    delimiter: Some(','),
    header: "label,quality",
};
pub const ATTRIBUTION_TABLE: FormatDescriptor = FormatDescriptor {
    id: "attribution",
    version: 1,
    delimiter: Some(','),
    header: "label,value",
};
pub const DEPLOYED_TRACE: FormatDescriptor = FormatDescriptor {
    id: "deployed-trace",
    version: 1,
    delimiter: Some(','),
    header: "problem,tool,outcome",
};
pub const CELL_DIAGNOSTICS: FormatDescriptor = FormatDescriptor {
    id: "cell-diagnostics",
    version: 1,
    delimiter: Some(','),
    header: "driver,benchmark,tau,top_share,top_equals_best,top_label",
};
pub const PLOT_DATA: FormatDescriptor = FormatDescriptor {
    id: "plot-data",
    version: 1,
    delimiter: Some(','),
    header: "curve,x,y,seed",
};
pub const HIERARCHY_SPEC: FormatDescriptor = FormatDescriptor {
    id: "hierarchy-spec",
    version: 1,
    delimiter: None,
    header: "{format, version, root}",
};
pub const WEIGHT_SNAPSHOT: FormatDescriptor = FormatDescriptor {
    id: "weight-snapshot",
    version: 1,
    delimiter: None,
    header: "{format, version, round, routers}",
};
pub const ROUND_TRACE: FormatDescriptor = FormatDescriptor {
    id: "round-trace",
    version: 1,
    delimiter: None,
    header: "one JSON object per line",
};

pub const ALL_FORMATS: [FormatDescriptor; 10] = [
    PASS_MATRIX,
    SUBSET_TABLE,
    QUALITY_TABLE,
    ATTRIBUTION_TABLE,
    DEPLOYED_TRACE,
    CELL_DIAGNOSTICS,
    PLOT_DATA,
    HIERARCHY_SPEC,
    WEIGHT_SNAPSHOT,
    ROUND_TRACE,
];

fn display(path: &Path) -> String {
    path.display().to_string()
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)
}

/// Parsed table body: records with their 1-based file line numbers.
struct Table {
    path: String,
    rows: Vec<(u64, Vec<String>)>,
}

impl Table {
    fn parse(text: &str, path: &Path, fmt: &FormatDescriptor) -> Result<Table> {
        let path_s = display(path);
        let (body, offset) = match text.strip_prefix("#format:") {
            Some(rest) => {
                let line = rest.lines().next().unwrap_or("").trim_end();
                let expected = format!("{}:v{}", fmt.id, fmt.version);
                if line != expected {
                    return Err(Error::UnsupportedFormat {
                        path: path_s,
                        expected: fmt.tag(),
                        found: format!("#format:{line}"),
                    });
                }
                let start = text.find('\n').map_or(text.len(), |i| i + 1);
                (&text[start..], 1)
            }
            None => (text, 0),
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(body.as_bytes());
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line()) + offset;
                Error::parse(&path_s, line, 0, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line()) + offset;
            if rec.len() == 1 && rec[0].trim().is_empty() {
                continue;
            }
            rows.push((line, rec.iter().map(|s| s.trim().to_string()).collect()));
        }
        if rows.is_empty() {
            return Err(Error::parse(&path_s, 1 + offset, 1, "missing header row"));
        }
        Ok(Table { path: path_s, rows })
    }

    fn err(&self, line: u64, column: usize, msg: impl Into<String>) -> Error {
        Error::parse(&self.path, line, column, msg)
    }

    fn expect_header(&self, expected: &[&str]) -> Result<()> {
        let (line, header) = &self.rows[0];
        if header.len() != expected.len() || header.iter().zip(expected).any(|(a, b)| a != b) {
            return Err(self.err(
                *line,
                1,
                format!("expected header `{}`, found `{}`", expected.join(","), header.join(",")),
            ));
        }
        Ok(())
    }

    fn expect_width(&self, line: u64, row: &[String], width: usize) -> Result<()> {
        if row.len() != width {
            return Err(self.err(
                line,
                row.len().min(width) + 1,
                format!("expected {width} fields, found {}", row.len()),
            ));
        }
        Ok(())
    }

    fn float(&self, line: u64, column: usize, s: &str) -> Result<f64> {
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(_) => Err(self.err(line, column, format!("non-finite number `{s}`"))),
            Err(_) => Err(self.err(line, column, format!("expected a number, found `{s}`"))),
        }
    }
}

fn csv_text(fmt: &FormatDescriptor, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).expect("in-memory csv write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("utf-8 input");
    format!("{}\n{body}", fmt.tag())
}

fn num(x: f64) -> String {
    format!("{x}")
}

// ---------------------------------------------------------------- pass matrix

pub fn parse_pass_matrix(text: &str, path: &Path) -> Result<PassMatrix> {
    let t = Table::parse(text, path, &PASS_MATRIX)?;
    let (hline, header) = &t.rows[0];
    if header.len() < 2 {
        return Err(t.err(*hline, 1, "header needs a problem-id column and at least one component"));
    }
    let components: Vec<String> = header[1..].to_vec();
    let mut seen = HashSet::new();
    for (i, c) in components.iter().enumerate() {
        if !seen.insert(c.as_str()) {
            return Err(t.err(*hline, i + 2, format!("duplicate component label `{c}`")));
        }
    }
    let mut problems = Vec::new();
    let mut cells = Vec::new();
    let mut seen_problems = HashSet::new();
    for (line, row) in &t.rows[1..] {
        t.expect_width(*line, row, header.len())?;
        if !seen_problems.insert(row[0].clone()) {
            return Err(t.err(*line, 1, format!("duplicate problem id `{}`", row[0])));
        }
        problems.push(row[0].clone());
        for (i, cell) in row[1..].iter().enumerate() {
            match cell.as_str() {
                "0" => cells.push(0),
                "1" => cells.push(1),
                other => return Err(t.err(*line, i + 2, format!("cell must be 0 or 1, found `{other}`"))),
            }
        }
    }
    PassMatrix::new(problems, components, cells)
}

pub fn read_pass_matrix(path: &Path) -> Result<PassMatrix> {
    parse_pass_matrix(&read_text(path)?, path)
}

pub fn pass_matrix_text(m: &PassMatrix) -> String {
    let header = std::iter::once("id".to_string())
        .chain(m.components().iter().cloned())
        .collect();
    let rows = (0..m.n_problems()).map(|p| {
        std::iter::once(m.problems()[p].clone())
            .chain(m.row(p).iter().map(|c| c.to_string()))
            .collect()
    });
    csv_text(&PASS_MATRIX, std::iter::once(header).chain(rows))
}

pub fn write_pass_matrix(path: &Path, m: &PassMatrix) -> Result<()> {
    write_text(path, &pass_matrix_text(m))
}

// --------------------------------------------------------------- subset table

/// Parse a subset table, allowing missing subsets.
pub fn parse_subset_table_sparse(text: &str, path: &Path) -> Result<SubsetValueTable> {
    let t = Table::parse(text, path, &SUBSET_TABLE)?;
    let (lline, labels_row) = &t.rows[0];
    if labels_row.first().map(String::as_str) != Some("labels") || labels_row.len() < 2 {
        return Err(t.err(*lline, 1, "first row must be `labels,<label>...`"));
    }
    let mut table = SubsetValueTable::new(labels_row[1..].to_vec()).map_err(|e| t.err(*lline, 2, e.to_string()))?;
    let Some((hline, header)) = t.rows.get(1) else {
        return Err(t.err(*lline + 1, 1, "missing `subset,value` header"));
    };
    if header.len() != 2 || header[0] != "subset" || header[1] != "value" {
        return Err(t.err(
            *hline,
            1,
            format!("expected header `subset,value`, found `{}`", header.join(",")),
        ));
    }
    for (line, row) in &t.rows[2..] {
        t.expect_width(*line, row, 2)?;
        let mask = if let Some(m) = row[0].strip_prefix("mask:") {
            m.parse::<u32>()
                .map_err(|_| t.err(*line, 1, format!("bad mask `{m}`")))?
        } else {
            let members: Vec<&str> = row[0].split(',').map(str::trim).collect();
            let mask = table.mask_of(&members).map_err(|e| t.err(*line, 1, e.to_string()))?;
            if mask.count_ones() as usize != members.len() {
                return Err(t.err(*line, 1, format!("repeated label in subset `{}`", row[0])));
            }
            mask
        };
        let value = t.float(*line, 2, &row[1])?;
        table.insert(mask, value).map_err(|e| t.err(*line, 1, e.to_string()))?;
    }
    Ok(table)
}

/// Parse a subset table that must cover every non-empty subset.
pub fn parse_subset_table(text: &str, path: &Path) -> Result<SubsetValueTable> {
    let table = parse_subset_table_sparse(text, path)?;
    let missing = table.missing();
    if !missing.is_empty() {
        return Err(Error::IncompleteLattice { missing });
    }
    Ok(table)
}

pub fn read_subset_table(path: &Path) -> Result<SubsetValueTable> {
    parse_subset_table(&read_text(path)?, path)
}

pub fn read_subset_table_sparse(path: &Path) -> Result<SubsetValueTable> {
    parse_subset_table_sparse(&read_text(path)?, path)
}

/// Rows in mask order, subsets written as comma-joined label sets.
pub fn subset_table_text(table: &SubsetValueTable) -> String {
    let labels = std::iter::once("labels".to_string())
        .chain(table.labels().iter().cloned())
        .collect();
    let header = vec!["subset".to_string(), "value".to_string()];
    let rows = table
        .entries()
        .map(|(mask, v)| vec![table.members(mask).join(","), num(v)]);
    csv_text(&SUBSET_TABLE, [labels, header].into_iter().chain(rows))
}

pub fn write_subset_table(path: &Path, table: &SubsetValueTable) -> Result<()> {
    write_text(path, &subset_table_text(table))
}

// ------------------------------------------------ quality and attribution tables

fn parse_labelled(text: &str, path: &Path, fmt: &FormatDescriptor, value_name: &str) -> Result<Vec<(String, f64)>> {
    let t = Table::parse(text, path, fmt)?;
    t.expect_header(&["label", value_name])?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, row) in &t.rows[1..] {
        t.expect_width(*line, row, 2)?;
        if !seen.insert(row[0].clone()) {
            return Err(t.err(*line, 1, format!("duplicate label `{}`", row[0])));
        }
        out.push((row[0].clone(), t.float(*line, 2, &row[1])?));
    }
    Ok(out)
}

fn labelled_text(fmt: &FormatDescriptor, value_name: &str, rows: &[(String, f64)]) -> String {
    let header = vec!["label".to_string(), value_name.to_string()];
    csv_text(
        fmt,
        std::iter::once(header).chain(rows.iter().map(|(l, v)| vec![l.clone(), num(*v)])),
    )
}

/// `(label, raw quality)` rows in file order.
pub fn parse_quality_table(text: &str, path: &Path) -> Result<Vec<(String, f64)>> {
    parse_labelled(text, path, &QUALITY_TABLE, "quality")
}

pub fn read_quality_table(path: &Path) -> Result<Vec<(String, f64)>> {
    parse_quality_table(&read_text(path)?, path)
}

pub fn quality_table_text(rows: &[(String, f64)]) -> String {
    labelled_text(&QUALITY_TABLE, "quality", rows)
}

pub fn write_quality_table(path: &Path, rows: &[(String, f64)]) -> Result<()> {
    write_text(path, &quality_table_text(rows))
}

pub fn parse_attribution(text: &str, path: &Path) -> Result<Vec<(String, f64)>> {
    parse_labelled(text, path, &ATTRIBUTION_TABLE, "value")
}

pub fn read_attribution(path: &Path) -> Result<Vec<(String, f64)>> {
    parse_attribution(&read_text(path)?, path)
}

pub fn attribution_text(rows: &[(String, f64)]) -> String {
    labelled_text(&ATTRIBUTION_TABLE, "value", rows)
}

pub fn write_attribution(path: &Path, rows: &[(String, f64)]) -> Result<()> {
    write_text(path, &attribution_text(rows))
}

/// Reorder labelled values to `labels`, reporting every missing and extra label.
pub fn align_to_labels(rows: &[(String, f64)], labels: &[String]) -> Result<Vec<f64>> {
    let map: HashMap<&str, f64> = rows.iter().map(|(l, v)| (l.as_str(), *v)).collect();
    let wanted: HashSet<&str> = labels.iter().map(String::as_str).collect();
    let missing: Vec<&str> = labels
        .iter()
        .map(String::as_str)
        .filter(|l| !map.contains_key(l))
        .collect();
    let extra: Vec<&str> = rows
        .iter()
        .map(|(l, _)| l.as_str())
        .filter(|l| !wanted.contains(l))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::UnknownLabel(format!(
            "missing {missing:?}, unexpected {extra:?}"
        )));
    }
    Ok(labels.iter().map(|l| map[l.as_str()]).collect())
}

/// Align a quality table to the tree's leaf order.
pub fn align_qualities(rows: &[(String, f64)], tree: &Tree) -> Result<Vec<f64>> {
    align_to_labels(rows, &tree.leaf_labels())
}

// ------------------------------------------------------------- deployed trace

/// One deployed route: the tool picked for a problem and its graded outcome.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeployedRoute {
    pub problem: String,
    pub tool: String,
    pub outcome: bool,
}

pub fn parse_deployed_trace(text: &str, path: &Path) -> Result<Vec<DeployedRoute>> {
    let t = Table::parse(text, path, &DEPLOYED_TRACE)?;
    t.expect_header(&["problem", "tool", "outcome"])?;
    let mut out = Vec::new();
    for (line, row) in &t.rows[1..] {
        t.expect_width(*line, row, 3)?;
        let outcome = match row[2].as_str() {
            "0" => false,
            "1" => true,
            other => return Err(t.err(*line, 3, format!("outcome must be 0 or 1, found `{other}`"))),
        };
        out.push(DeployedRoute {
            problem: row[0].clone(),
            tool: row[1].clone(),
            outcome,
        });
    }
    Ok(out)
}

pub fn read_deployed_trace(path: &Path) -> Result<Vec<DeployedRoute>> {
    parse_deployed_trace(&read_text(path)?, path)
}

pub fn deployed_trace_text(routes: &[DeployedRoute]) -> String {
    let header = vec!["problem".to_string(), "tool".to_string(), "outcome".to_string()];
    let rows = routes
        .iter()
        .map(|r| vec![r.problem.clone(), r.tool.clone(), (r.outcome as u8).to_string()]);
    csv_text(&DEPLOYED_TRACE, std::iter::once(header).chain(rows))
}

pub fn write_deployed_trace(path: &Path, routes: &[DeployedRoute]) -> Result<()> {
    write_text(path, &deployed_trace_text(routes))
}

// ----------------------------------------------------------- cell diagnostics

pub fn parse_diagnostics(text: &str, path: &Path) -> Result<Vec<DiagnosticRow>> {
    let t = Table::parse(text, path, &CELL_DIAGNOSTICS)?;
    t.expect_header(&[
        "driver",
        "benchmark",
        "tau",
        "top_share",
        "top_equals_best",
        "top_label",
    ])?;
    let mut out = Vec::new();
    for (line, row) in &t.rows[1..] {
        t.expect_width(*line, row, 6)?;
        let flag = match row[4].as_str() {
            "true" => true,
            "false" => false,
            other => return Err(t.err(*line, 5, format!("expected true or false, found `{other}`"))),
        };
        let top_share = t.float(*line, 4, &row[3])?;
        if !(0.0..=1.0).contains(&top_share) {
            return Err(t.err(*line, 4, format!("top_share {top_share} outside [0, 1]")));
        }
        out.push(DiagnosticRow {
            driver: row[0].clone(),
            benchmark: row[1].clone(),
            tau: t.float(*line, 3, &row[2])?,
            top_share,
            top_equals_best: flag,
            top_label: row[5].clone(),
        });
    }
    Ok(out)
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticRow>> {
    parse_diagnostics(&read_text(path)?, path)
}

pub fn diagnostics_text(rows: &[DiagnosticRow]) -> String {
    let header = CELL_DIAGNOSTICS.header.split(',').map(String::from).collect();
    let body = rows.iter().map(|r| {
        vec![
            r.driver.clone(),
            r.benchmark.clone(),
            num(r.tau),
            num(r.top_share),
            r.top_equals_best.to_string(),
            r.top_label.clone(),
        ]
    });
    csv_text(&CELL_DIAGNOSTICS, std::iter::once(header).chain(body))
}

pub fn write_diagnostics(path: &Path, rows: &[DiagnosticRow]) -> Result<()> {
    write_text(path, &diagnostics_text(rows))
}

// ------------------------------------------------------------------ plot data

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub curve: String,
    pub x: f64,
    pub y: f64,
    /// `None` for seed-aggregated points.
    pub seed: Option<u64>,
}

pub fn plot_data_text(points: &[PlotPoint]) -> String {
    let header = PLOT_DATA.header.split(',').map(String::from).collect();
    let body = points.iter().map(|p| {
        vec![
            p.curve.clone(),
            num(p.x),
            num(p.y),
            p.seed.map(|s| s.to_string()).unwrap_or_default(),
        ]
    });
    csv_text(&PLOT_DATA, std::iter::once(header).chain(body))
}

pub fn parse_plot_data(text: &str, path: &Path) -> Result<Vec<PlotPoint>> {
    let t = Table::parse(text, path, &PLOT_DATA)?;
    t.expect_header(&["curve", "x", "y", "seed"])?;
    t.rows[1..]
        .iter()
        .map(|(line, row)| {
            t.expect_width(*line, row, 4)?;
            let seed = if row[3].is_empty() {
                None
            } else {
                Some(
                    row[3]
                        .parse()
                        .map_err(|_| t.err(*line, 4, format!("bad seed `{}`", row[3])))?,
                )
            };
            Ok(PlotPoint {
                curve: row[0].clone(),
                x: t.float(*line, 2, &row[1])?,
                y: t.float(*line, 3, &row[2])?,
                seed,
            })
        })
        .collect()
}

pub fn write_plot_data(path: &Path, points: &[PlotPoint]) -> Result<()> {
    write_text(path, &plot_data_text(points))
}

// ---------------------------------------------------------- JSON documents

/// Pretty JSON with a trailing newline.
pub fn json_text<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable document");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &json_text(value))
}

pub fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Io => Error::Json {
            path: display(path),
            source: e,
        },
        _ => Error::parse(&display(path), e.line() as u64, e.column(), e.to_string()),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json(&read_text(path)?, path)
}

#[derive(Deserialize)]
struct Envelope {
    format: String,
    version: u32,
}

/// Check a JSON document's `format` and `version` fields.
pub fn check_envelope(text: &str, path: &Path, fmt: &FormatDescriptor) -> Result<()> {
    let env: Envelope = parse_json(text, path)?;
    if env.format != fmt.id || env.version != fmt.version {
        return Err(Error::UnsupportedFormat {
            path: display(path),
            expected: format!("{} v{}", fmt.id, fmt.version),
            found: format!("{} v{}", env.format, env.version),
        });
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct SpecDocument {
    format: String,
    version: u32,
    root: crate::hierarchy::SpecNode,
}

pub fn parse_hierarchy_spec(text: &str, path: &Path) -> Result<HierarchySpec> {
    check_envelope(text, path, &HIERARCHY_SPEC)?;
    let doc: SpecDocument = parse_json(text, path)?;
    let spec = HierarchySpec { root: doc.root };
    Tree::from_spec(&spec)?;
    Ok(spec)
}

pub fn read_hierarchy_spec(path: &Path) -> Result<HierarchySpec> {
    parse_hierarchy_spec(&read_text(path)?, path)
}

pub fn hierarchy_spec_text(spec: &HierarchySpec) -> String {
    json_text(&SpecDocument {
        format: HIERARCHY_SPEC.id.into(),
        version: HIERARCHY_SPEC.version,
        root: spec.root.clone(),
    })
}

pub fn write_hierarchy_spec(path: &Path, spec: &HierarchySpec) -> Result<()> {
    write_text(path, &hierarchy_spec_text(spec))
}

#[derive(Serialize, Deserialize)]
struct SnapshotDocument {
    format: String,
    version: u32,
    round: u64,
    routers: BTreeMap<String, Vec<f64>>,
}

pub fn weight_snapshot_text(tree: &Tree, weights: &WeightState) -> String {
    let routers = (0..tree.n_routers())
        .map(|slot| (tree.label(tree.router(slot)).to_string(), weights.router(slot).to_vec()))
        .collect();
    json_text(&SnapshotDocument {
        format: WEIGHT_SNAPSHOT.id.into(),
        version: WEIGHT_SNAPSHOT.version,
        round: weights.round,
        routers,
    })
}

pub fn write_weight_snapshot(path: &Path, tree: &Tree, weights: &WeightState) -> Result<()> {
    write_text(path, &weight_snapshot_text(tree, weights))
}

/// Parse a snapshot and map it onto `tree`'s router slots. Every router must
/// be present with the right branching, and no unknown routers may appear.
pub fn parse_weight_snapshot(text: &str, path: &Path, tree: &Tree) -> Result<WeightState> {
    check_envelope(text, path, &WEIGHT_SNAPSHOT)?;
    let doc: SnapshotDocument = parse_json(text, path)?;
    let labels = tree.router_labels();
    let known: HashSet<&str> = labels.iter().map(String::as_str).collect();
    if let Some(extra) = doc.routers.keys().find(|k| !known.contains(k.as_str())) {
        return Err(Error::UnknownLabel(format!(
            "{extra} (router in snapshot but not in tree)"
        )));
    }
    let weights = labels
        .iter()
        .map(|l| {
            doc.routers
                .get(l)
                .cloned()
                .ok_or_else(|| Error::UnknownLabel(format!("{l} (router missing from snapshot)")))
        })
        .collect::<Result<Vec<_>>>()?;
    let state = WeightState {
        weights,
        round: doc.round,
    };
    state.validate(tree, 1e-9)?;
    Ok(state)
}

pub fn read_weight_snapshot(path: &Path, tree: &Tree) -> Result<WeightState> {
    parse_weight_snapshot(&read_text(path)?, path, tree)
}

/// JSON Lines: a header object, then one record per retained round.
pub fn round_trace_text(records: &[RoundRecord]) -> String {
    let mut out = serde_json::to_string(&serde_json::json!({
        "format": ROUND_TRACE.id,
        "version": ROUND_TRACE.version,
    }))
    .expect("json");
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("json"));
        out.push('\n');
    }
    out
}

pub fn parse_round_trace(text: &str, path: &Path) -> Result<Vec<RoundRecord>> {
    let mut lines = text.lines().enumerate();
    let (_, head) = lines
        .next()
        .ok_or_else(|| Error::parse(&display(path), 1, 1, "empty trace"))?;
    check_envelope(head, path, &ROUND_TRACE)?;
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::parse(&display(path), i as u64 + 1, e.column(), e.to_string()))
        })
        .collect()
}

pub fn write_round_trace(path: &Path, records: &[RoundRecord]) -> Result<()> {
    write_text(path, &round_trace_text(records))
}
