//! Fixtures shared by the benchmarks.

use noisy_tr::harness::{exact_model, find_problem};
use noisy_tr::{RunSpec, TaylorModel};

/// Exact Taylor model of degree `order` of a suite problem at its start point.
pub fn start_model(problem: &str, order: usize) -> TaylorModel {
    let p = find_problem(problem).expect("suite problem");
    exact_model(&p, &p.x0, order)
}

/// Noiseless run at a single accuracy level.
pub fn exact_run(problem: &str, q: usize, eps: f64) -> RunSpec {
    RunSpec::new(problem, q, vec![eps; q])
}

/// Bounded-noise run that stops at the derivative floor.
pub fn noisy_run(problem: &str, theta_d: f64) -> RunSpec {
    RunSpec::new(problem, 2, vec![1e-6; 2]).bounded(0.0, theta_d, 0)
}
