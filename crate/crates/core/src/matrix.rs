use std::collections::HashSet;

use crate::error::{Error, Result};

/// Binary outcome table: one row per problem, one column per component.
#[derive(Clone, Debug, PartialEq)]
pub struct PassMatrix {
    problems: Vec<String>,
    components: Vec<String>,
    cells: Vec<u8>,
}

impl PassMatrix {
    /// Build from row-major cells. Every cell must be 0 or 1.
    pub fn new(problems: Vec<String>, components: Vec<String>, cells: Vec<u8>) -> Result<Self> {
        if cells.len() != problems.len() * components.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} cells for {} problems x {} components",
                cells.len(),
                problems.len(),
                components.len()
            )));
        }
        if let Some(pos) = cells.iter().position(|&c| c > 1) {
            return Err(Error::ShapeMismatch(format!(
                "non-binary cell {} at problem {}, component {}",
                cells[pos],
                pos / components.len(),
                pos % components.len()
            )));
        }
        check_unique(&components)?;
        check_unique(&problems)?;
        Ok(PassMatrix {
            problems,
            components,
            cells,
        })
    }

    pub fn from_rows(problems: Vec<String>, components: Vec<String>, rows: &[Vec<u8>]) -> Result<Self> {
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != components.len()) {
            return Err(Error::ShapeMismatch(format!(
                "row {i} has {} cells, expected {}",
                r.len(),
                components.len()
            )));
        }
        PassMatrix::new(problems, components, rows.concat())
    }

    pub fn problems(&self) -> &[String] {
        &self.problems
    }

    pub fn components(&self) -> &[String] {
        &self.components
    }

    pub fn n_problems(&self) -> usize {
        self.problems.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn row(&self, problem: usize) -> &[u8] {
        let n = self.components.len();
        &self.cells[problem * n..(problem + 1) * n]
    }

    pub fn passes(&self, problem: usize, component: usize) -> bool {
        self.cells[problem * self.components.len() + component] == 1
    }

    pub fn component_index(&self, label: &str) -> Option<usize> {
        self.components.iter().position(|c| c == label)
    }

    /// Column means.
    pub fn pass_rates(&self) -> Vec<f64> {
        let n = self.components.len();
        let mut counts = vec![0usize; n];
        for row in self.cells.chunks_exact(n.max(1)) {
            for (c, &v) in counts.iter_mut().zip(row) {
                *c += v as usize;
            }
        }
        let p = self.problems.len().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / p).collect()
    }

    /// Fraction of problems solved by at least one component in `active`.
    pub fn coverage(&self, active: &[usize]) -> f64 {
        if self.problems.is_empty() {
            return 0.0;
        }
        let solved = (0..self.problems.len())
            .filter(|&p| active.iter().any(|&c| self.passes(p, c)))
            .count();
        solved as f64 / self.problems.len() as f64
    }

    /// Map each label to its column, failing on the first unknown label.
    pub fn columns_for(&self, labels: &[String]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|l| self.component_index(l).ok_or_else(|| Error::UnknownLabel(l.clone())))
            .collect()
    }
}

fn check_unique(labels: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(labels.len());
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}
