//! Noise-aware trust-region minimization with dynamically controlled
//! accuracy of function values and derivatives.
//!
//! * [`model`]: Taylor models built from derivative tensors;
//! * [`oracle`]: inexact evaluation with requested accuracy and noise floors;
//! * [`subproblem`]: ball-constrained maximization of model decrements;
//! * [`check`]: accuracy adjudication of a computed decrement;
//! * [`solver`]: the trust-region method and its evaluation bounds;
//! * [`harness`]: test problems, brute-force verification and sweeps.

pub mod check;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod solver;
pub mod subproblem;

pub use check::{check, AccuracyStatus, CheckConstants, CheckResult};
pub use harness::{
    brute_force_phi, problem_suite, run_spec, run_sweep, verify_guarantee, HarnessError, ProblemSpec, ResultRow,
    RunSpec, SweepSpec,
};
pub use model::{factorial, sum_delta_powers, tensor_norm, DerivTensor, TaylorModel, Vector};
pub use oracle::{
    make_noise_model, EvalCounters, NoiseFloor, NoiseKind, NoiseParams, NoiseProfile, NoisyOracle, Objective, Oracle,
    OracleOutcome,
};
pub use solver::{
    run, theoretical_bounds, BoundRecord, ProblemConstants, SolverConfig, SolverError, Status, TerminationReport,
};
pub use subproblem::{compute_step, global_step, maximize_decrement, Displacement};
