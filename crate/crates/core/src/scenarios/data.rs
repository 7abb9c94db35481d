use log::warn;
use rand::Rng;

use crate::error::{Error, Result};
use crate::hierarchy::{HierarchySpec, SpecNode};
use crate::matrix::PassMatrix;
use crate::metrics::average_ranks;
use crate::rng;

/// Map raw qualities linearly in (average-tie) rank onto `[0.05, 0.95]`.
/// All-equal inputs map to 0.5.
pub fn rank_normalize(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.len() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "rank normalization needs at least 2 values, got {}",
            raw.len()
        )));
    }
    if let Some((index, &value)) = raw.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidQuality { index, value });
    }
    if raw.iter().all(|&v| v == raw[0]) {
        warn!(
            "all {} qualities are equal; rank normalization maps them to 0.5",
            raw.len()
        );
        return Ok(vec![0.5; raw.len()]);
    }
    let n = raw.len() as f64;
    Ok(average_ranks(raw)
        .into_iter()
        .map(|r| {
            let f = (r - 1.0) / (n - 1.0);
            0.05 * (1.0 - f) + 0.95 * f
        })
        .collect())
}

/// One component of the tiered preset: tier, subgroup, label, pass rate.
pub type PresetEntry = (&'static str, &'static str, &'static str, f64);

/// Eighteen components in three tiers of three two-member subgroups, with
/// pass rates of the recorded LiveCodeBench ensemble.
pub const TIERED18: [PresetEntry; 18] = [
    ("A", "general", "gpt-oss-120b", 0.800),
    ("A", "general", "deepseek-v3.2", 0.728),
    ("A", "specialist", "qwen3-32b", 0.769),
    ("A", "specialist", "minimax-m2.5", 0.744),
    ("A", "code", "qwen3-coder-480b", 0.699),
    ("A", "code", "r1-distill-qwen-32b", 0.699),
    ("B", "large", "glm-4.7-flash", 0.584),
    ("B", "large", "qwen2.5-72b", 0.445),
    ("B", "code", "qwen2.5-coder-32b", 0.451),
    ("B", "code", "qwen2.5-32b-instruct", 0.403),
    ("B", "mid", "qwen2.5-14b-instruct-1m", 0.356),
    ("B", "mid", "phi-4-14b", 0.314),
    ("C", "qwen-small", "qwen2.5-14b", 0.314),
    ("C", "qwen-small", "qwen2.5-coder-7b", 0.303),
    ("C", "open-large", "llama-3.1-70b", 0.294),
    ("C", "open-large", "deepseek-coder-v2", 0.238),
    ("C", "open-small", "llama-3.1-8b", 0.149),
    ("C", "open-small", "mistral-7b", 0.068),
];

/// Tier / subgroup / component hierarchy for a preset, in preset order.
pub fn preset_spec(entries: &[PresetEntry]) -> HierarchySpec {
    let mut tiers: Vec<SpecNode> = Vec::new();
    for &(tier, group, label, _) in entries {
        if tiers.last().map(|t| t.label.as_str()) != Some(tier) {
            tiers.push(SpecNode::group(tier, Vec::new()));
        }
        let t = tiers.last_mut().expect("pushed above");
        let group_label = format!("{tier}.{group}");
        if t.children.last().map(|g| g.label.as_str()) != Some(group_label.as_str()) {
            t.children.push(SpecNode::group(group_label, Vec::new()));
        }
        t.children
            .last_mut()
            .expect("pushed above")
            .children
            .push(SpecNode::leaf(label));
    }
    HierarchySpec {
        root: SpecNode::group("root", tiers),
    }
}

/// Pass matrix with a shared latent difficulty. Each problem gets a
/// difficulty `d ~ U(0, 1)`; component `m` sees `d + jitter * (u - 1/2)`
/// and solves exactly its `round(rate * problems)` easiest problems. With
/// small jitter the solved sets are close to nested.
pub fn synthetic_matrix(
    labels: &[String],
    rates: &[f64],
    problems: usize,
    jitter: f64,
    seed: u64,
) -> Result<PassMatrix> {
    if labels.len() != rates.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels, {} rates",
            labels.len(),
            rates.len()
        )));
    }
    if let Some((index, &value)) = rates.iter().enumerate().find(|(_, r)| !(0.0..=1.0).contains(*r)) {
        return Err(Error::InvalidQuality { index, value });
    }
    let mut rng = rng::stream(seed, rng::SCENARIO_STREAM);
    let difficulty: Vec<f64> = (0..problems).map(|_| rng.random::<f64>()).collect();
    let n = labels.len();
    let mut cells = vec![0u8; problems * n];
    for (m, &rate) in rates.iter().enumerate() {
        let score: Vec<f64> = difficulty
            .iter()
            .map(|d| d + jitter * (rng.random::<f64>() - 0.5))
            .collect();
        let mut order: Vec<usize> = (0..problems).collect();
        order.sort_by(|&a, &b| score[a].total_cmp(&score[b]).then(a.cmp(&b)));
        let solved = (rate * problems as f64).round() as usize;
        for &p in &order[..solved] {
            cells[p * n + m] = 1;
        }
    }
    let width = problems.to_string().len();
    PassMatrix::new(
        (0..problems).map(|p| format!("q{p:0width$}")).collect(),
        labels.to_vec(),
        cells,
    )
}

/// The tiered preset's matrix and hierarchy.
pub fn tiered18(problems: usize, jitter: f64, seed: u64) -> Result<(PassMatrix, HierarchySpec)> {
    let labels: Vec<String> = TIERED18.iter().map(|e| e.2.to_string()).collect();
    let rates: Vec<f64> = TIERED18.iter().map(|e| e.3).collect();
    Ok((
        synthetic_matrix(&labels, &rates, problems, jitter, seed)?,
        preset_spec(&TIERED18),
    ))
}
