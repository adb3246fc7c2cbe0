//! Inputs shared by the solver benchmarks.

pub use growfrag_core;

use growfrag_core::benchmarks::logramp_model;
use growfrag_core::simulation::trial_rng;
use growfrag_core::ModelDefinition;
use rand::Rng;

/// A LOGRAMP cell with positive growth rate and moderate survival.
pub const CELL: (f64, f64) = (2.0, 0.6);

pub fn model() -> ModelDefinition {
    logramp_model()
}

/// Reproducible `(mass, exponential variate)` pairs for clock benchmarks.
pub fn clock_inputs(n: usize) -> Vec<(f64, f64)> {
    let mut rng = trial_rng(42, 0);
    (0..n)
        .map(|_| (rng.gen_range(0.05..0.95), -(1.0 - rng.gen::<f64>()).ln()))
        .collect()
}
