//! Reference instances shared by tests, benchmarks and the CLI.

use crate::model::{Alphabet, Environment, JointModel, NORMALIZATION_TOL};

/// Per-source PMFs `[θ][j]` of the three-hypothesis, two-source ternary example.
pub const THREE_HYPOTHESIS_PMFS: [[[f64; 3]; 2]; 3] = [
    [[0.9, 0.07, 0.03], [0.78, 0.17, 0.05]],
    [[0.12, 0.83, 0.05], [0.04, 0.79, 0.17]],
    [[0.05, 0.1, 0.85], [0.15, 0.05, 0.8]],
];

/// The ternary example as independent sources.
pub fn three_hypothesis_model() -> JointModel {
    let per_source = THREE_HYPOTHESIS_PMFS
        .iter()
        .map(|sources| sources.iter().map(|p| p.to_vec()).collect())
        .collect();
    JointModel::from_independent(
        Alphabet::new(vec![3, 3]).expect("valid alphabet"),
        per_source,
        NORMALIZATION_TOL,
    )
    .expect("valid reference model")
}

/// The ternary example in the classical setup: both sources always
/// available, one source sampled per step, no budgets.
pub fn three_hypothesis_env() -> Environment {
    Environment::chernoff(three_hypothesis_model())
}
