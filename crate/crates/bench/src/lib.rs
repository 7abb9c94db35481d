//! Fixtures shared by the benchmarks.

use hierattr_core::scenarios::tiered18;
use hierattr_core::substrate::OutcomeProvider;
use hierattr_core::{PassMatrix, QualityVector, Tree};

/// Balanced tree with linearly spaced leaf qualities in `[0.1, 0.9]`.
pub fn bernoulli_tree(branching: &[usize]) -> (Tree, OutcomeProvider) {
    let tree = Tree::balanced(branching).expect("valid branching");
    let n = tree.n_leaves();
    let q = (0..n)
        .map(|j| {
            if n == 1 {
                0.5
            } else {
                0.1 + 0.8 * j as f64 / (n - 1) as f64
            }
        })
        .collect();
    let provider = OutcomeProvider::Bernoulli(QualityVector::for_tree(q, &tree).expect("qualities in range"));
    (tree, provider)
}

/// The 18-component tiered matrix with `problems` rows.
pub fn tiered_matrix(problems: usize) -> PassMatrix {
    tiered18(problems, 0.1, 0).expect("preset builds").0
}

/// First `n` columns of the tiered matrix.
pub fn narrow_matrix(problems: usize, n: usize) -> PassMatrix {
    let m = tiered_matrix(problems);
    let cols: Vec<String> = m.components()[..n].to_vec();
    let rows: Vec<Vec<u8>> = (0..m.n_problems()).map(|i| m.row(i)[..n].to_vec()).collect();
    PassMatrix::from_rows(m.problems().to_vec(), cols, &rows).expect("rectangular")
}
