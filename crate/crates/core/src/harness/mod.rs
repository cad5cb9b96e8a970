//! Experiment plumbing: the problem suite, brute-force verification of the
//! termination guarantees, evaluation-bound comparison, parameter sweeps and
//! CSV output.

pub mod brute;
pub mod problems;
pub mod results;
pub mod sweep;
pub mod verify;

use std::time::Instant;

use thiserror::Error;

use crate::oracle::{make_noise_model, NoiseKind, NoiseParams, Oracle, UnknownNoiseKind};
use crate::solver::{run, theoretical_bounds, BoundsError, ConfigError, SolverConfig, SolverError, TerminationReport};

pub use brute::{brute_force_model_phi, brute_force_phi, exact_model, more_sorensen};
pub use problems::{find_problem, problem_names, problem_suite, ProblemSpec};
pub use results::{read_results, write_results, ResultRow, SCHEMA_VERSION};
pub use sweep::{frontier_violations, monotone_f_evals_violations, run_sweep, FrontierReport, SweepSpec};
pub use verify::{
    decrease_violations, reverify_row, verify_guarantee, Clause, GuaranteeOutcome, TerminationFlags, GUARANTEE_SLACK,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown problem {0:?}")]
    UnknownProblem(String),
    #[error("derivative of order {order} of {problem} disagrees with finite differences (relative error {error:e})")]
    InconsistentDerivative { problem: String, order: usize, error: f64 },
    #[error("point has dimension {got}, problem expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("no brute-force reference for order {order} in dimension {dim}")]
    DimensionTooLarge { dim: usize, order: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    NoiseKind(#[from] UnknownNoiseKind),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("invalid sweep specification: {0}")]
    Spec(String),
    #[error("results line {line}: {reason}")]
    Row { line: u64, reason: String },
}

/// One solver run on a suite problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub problem: String,
    pub q: usize,
    pub eps: Vec<f64>,
    pub noise_model: NoiseKind,
    /// Floors of the bounded noise model; ignored by the other models.
    pub theta_f: f64,
    pub theta_d: f64,
    /// Significand bits and magnitude of the quantized model.
    pub bits: u32,
    pub magnitude: f64,
    pub seed: u64,
    pub global_step: bool,
    /// Further `SolverConfig` fields, applied in order.
    pub overrides: Vec<(String, String)>,
}

impl RunSpec {
    /// Exact oracle, default constants.
    pub fn new(problem: &str, q: usize, eps: Vec<f64>) -> Self {
        let defaults = NoiseParams::default();
        Self {
            problem: problem.to_string(),
            q,
            eps,
            noise_model: NoiseKind::Exact,
            theta_f: 0.0,
            theta_d: 0.0,
            bits: defaults.bits,
            magnitude: defaults.magnitude,
            seed: 0,
            global_step: false,
            overrides: Vec::new(),
        }
    }

    pub fn bounded(mut self, theta_f: f64, theta_d: f64, seed: u64) -> Self {
        self.noise_model = NoiseKind::Bounded;
        self.theta_f = theta_f;
        self.theta_d = theta_d;
        self.seed = seed;
        self
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.overrides.push((key.to_string(), value.to_string()));
        self
    }

    pub fn config(&self) -> Result<SolverConfig, ConfigError> {
        let mut c = SolverConfig::new(self.q, self.eps.clone());
        for (k, v) in &self.overrides {
            c.set(k, v)?;
        }
        c.enforce_global_step = self.global_step;
        Ok(c)
    }

    fn noise_params(&self) -> NoiseParams {
        NoiseParams {
            theta_f: self.theta_f,
            theta_d: self.theta_d,
            bits: self.bits,
            magnitude: self.magnitude,
            ..NoiseParams::default()
        }
    }
}

/// A run's CSV row together with the full report.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub row: ResultRow,
    pub report: TerminationReport,
}

/// Runs `spec`, verifies the termination guarantee by brute force and
/// compares the evaluation counts with the theoretical bounds. Wall-clock
/// time is recorded only when `timing` is set, keeping output reproducible
/// otherwise.
pub fn run_spec(spec: &RunSpec, timing: bool) -> Result<RunOutcome, HarnessError> {
    let problem = find_problem(&spec.problem)?;
    let config = spec.config()?;
    let mut oracle = make_noise_model(
        spec.noise_model,
        spec.seed,
        spec.noise_params(),
        problem.objective.clone(),
    );
    let noise = oracle.noise();
    let start = Instant::now();
    let report = run(&mut oracle, &problem.x0, config.clone())?;
    let runtime_ms = timing.then(|| start.elapsed().as_secs_f64() * 1e3);

    let guarantee = verify_guarantee(&(&report).into(), &problem, &config, noise)?;
    let bounds = theoretical_bounds(&config, &problem.constants(config.q), noise)?;
    let violations = decrease_violations(&report.trace, &problem, &config);
    let row = ResultRow::new(
        spec, &config, noise, &problem, &report, &guarantee, &bounds, violations, runtime_ms,
    );
    Ok(RunOutcome { row, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Status;

    #[test]
    fn noiseless_run_row() {
        let out = run_spec(&RunSpec::new("quadratic2", 2, vec![1e-3, 1e-3]), false).unwrap();
        let row = &out.row;
        assert_eq!(row.status, Status::ApproximateMinimizer);
        assert!(row.guarantee_satisfied);
        assert!(row.evals_within_bounds);
        assert_eq!(row.decrease_violations, 0);
        assert_eq!(row.runtime_ms, None);
        assert_eq!(row.phi_bruteforce.len(), 2);
        assert_eq!(row.theta_f, 0.0);
        assert!(row.passed());
    }

    #[test]
    fn exact_model_ignores_requested_floors() {
        let mut spec = RunSpec::new("quadratic2", 1, vec![1e-3]);
        spec.theta_d = 1e-2;
        let out = run_spec(&spec, false).unwrap();
        assert_eq!(out.row.theta_d, 0.0);
    }

    #[test]
    fn overrides_reach_the_config() {
        let spec = RunSpec::new("quadratic2", 1, vec![1e-3])
            .with("delta0", 0.5)
            .with("kappa_zeta", 1.0);
        let c = spec.config().unwrap();
        assert_eq!(c.delta0, 0.5);
        assert_eq!(c.kappa_zeta, 1.0);
        let bad = RunSpec::new("quadratic2", 1, vec![1e-3]).with("nonsense", 1);
        assert!(bad.config().is_err());
    }

    #[test]
    fn timing_is_opt_in() {
        let out = run_spec(&RunSpec::new("quadratic2", 1, vec![1e-2]), true).unwrap();
        assert!(out.row.runtime_ms.is_some());
    }

    #[test]
    fn unknown_problem_is_an_error() {
        assert!(matches!(
            run_spec(&RunSpec::new("nope", 1, vec![1e-2]), false),
            Err(HarnessError::UnknownProblem(_))
        ));
    }
}
