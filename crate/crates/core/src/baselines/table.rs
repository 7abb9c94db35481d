use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::shap::{ShapMethod, ShapResult, DEFAULT_EXACT_LIMIT};
use super::shapley_from_lattice;
use crate::error::{Error, Result};

/// Recorded coalition values over subsets of `K` labelled components.
/// Bit `i` of a mask selects `labels[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetValueTable {
    labels: Vec<String>,
    values: BTreeMap<u32, f64>,
}

impl SubsetValueTable {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() || labels.len() > 31 {
            return Err(Error::ShapeMismatch(format!(
                "subset table needs 1..=31 labels, got {}",
                labels.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        Ok(SubsetValueTable {
            labels,
            values: BTreeMap::new(),
        })
    }

    /// Table of the additive game `v(S) = sum of phi_i over S`, whose Shapley
    /// values are `phi` itself.
    pub fn additive(labels: Vec<String>, phi: &[f64]) -> Result<Self> {
        if labels.len() != phi.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels, {} values",
                labels.len(),
                phi.len()
            )));
        }
        let mut t = SubsetValueTable::new(labels)?;
        for mask in 1..t.full_mask() + 1 {
            let v = (0..phi.len()).filter(|i| mask & (1 << i) != 0).map(|i| phi[i]).sum();
            t.values.insert(mask, v);
        }
        Ok(t)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn full_mask(&self) -> u32 {
        ((1u64 << self.labels.len()) - 1) as u32
    }

    pub fn mask_of<S: AsRef<str>>(&self, members: &[S]) -> Result<u32> {
        let mut mask = 0u32;
        for m in members {
            let i = self
                .labels
                .iter()
                .position(|l| l == m.as_ref())
                .ok_or_else(|| Error::UnknownLabel(m.as_ref().to_string()))?;
            mask |= 1 << i;
        }
        Ok(mask)
    }

    pub fn members(&self, mask: u32) -> Vec<&str> {
        (0..self.labels.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| self.labels[i].as_str())
            .collect()
    }

    /// Insert v(S); the empty set and masks outside the label range are
    /// rejected, as is a second value for the same subset.
    pub fn insert(&mut self, mask: u32, value: f64) -> Result<()> {
        if mask == 0 || mask > self.full_mask() {
            return Err(Error::ShapeMismatch(format!(
                "mask {mask} outside 1..={}",
                self.full_mask()
            )));
        }
        if !value.is_finite() {
            return Err(Error::ShapeMismatch(format!("non-finite value for mask {mask}")));
        }
        if self.values.insert(mask, value).is_some() {
            return Err(Error::DuplicateLabel(format!("subset mask {mask}")));
        }
        Ok(())
    }

    pub fn get(&self, mask: u32) -> Option<f64> {
        if mask == 0 {
            Some(0.0)
        } else {
            self.values.get(&mask).copied()
        }
    }

    /// Recorded (mask, value) pairs in mask order.
    pub fn entries(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.values.iter().map(|(&m, &v)| (m, v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn missing(&self) -> Vec<u32> {
        (1..=self.full_mask())
            .filter(|m| !self.values.contains_key(m))
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.values.len() == self.full_mask() as usize
    }
}

/// Exact Shapley values over the table's components.
pub fn shap_from_table(table: &SubsetValueTable) -> Result<ShapResult> {
    let k = table.k();
    if k > DEFAULT_EXACT_LIMIT {
        return Err(Error::ExactLimit {
            n: k,
            limit: DEFAULT_EXACT_LIMIT,
        });
    }
    let missing = table.missing();
    if !missing.is_empty() {
        return Err(Error::IncompleteLattice { missing });
    }
    let v: Vec<f64> = (0..=table.full_mask())
        .map(|m| table.get(m).expect("complete"))
        .collect();
    Ok(ShapResult {
        labels: table.labels().to_vec(),
        phi: shapley_from_lattice(&v, k),
        method: ShapMethod::Table,
        kind: None,
        evaluations: table.len() as u64,
    })
}
