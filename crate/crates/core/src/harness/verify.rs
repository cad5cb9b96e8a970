//! Post-hoc checks of a terminated run against the exact problem.

use crate::model::{factorial, Vector};
use crate::oracle::NoiseProfile;
use crate::solver::{theoretical_bounds, IterationRecord, SolverConfig, Status, TerminationReport};

use super::brute::brute_force_phi;
use super::problems::{find_problem, ProblemSpec};
use super::results::ResultRow;
use super::HarnessError;

/// Multiplier applied to every bound before comparing it with a brute-force
/// value.
pub const GUARANTEE_SLACK: f64 = 1.01;

/// Which termination guarantee a row is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clause {
    /// `phi_i^delta <= eps_i delta^i / i!` for every order up to `q`.
    ApproximateMinimizer,
    /// `phi_j^delta <= 4 theta_d / (gamma_zeta omega) delta`.
    NoisePhi,
    /// `phi_j^nu <= 4 theta_d / (gamma_zeta omega) max[nu, nu^j]`.
    NoiseStep,
    /// `phi_j^nu <= theta_f / sigma (1 + 1/omega)`, global step enforced.
    NoiseFunction,
    /// Function noise without an enforced global step: only the lower-order
    /// conditions hold.
    LowerOrdersOnly,
    /// Budget exhausted or oracle refused: no guarantee.
    None,
}

impl Clause {
    pub fn as_str(self) -> &'static str {
        match self {
            Clause::ApproximateMinimizer => "optimality1",
            Clause::NoisePhi => "optimality2",
            Clause::NoiseStep => "optimality3",
            Clause::NoiseFunction => "optimality4",
            Clause::LowerOrdersOnly => "optimality0",
            Clause::None => "none",
        }
    }

    pub fn for_status(status: Status, global_step: bool) -> Self {
        match status {
            Status::ApproximateMinimizer => Clause::ApproximateMinimizer,
            Status::InNoisePhi => Clause::NoisePhi,
            Status::InNoiseS => Clause::NoiseStep,
            Status::InNoiseF if global_step => Clause::NoiseFunction,
            Status::InNoiseF => Clause::LowerOrdersOnly,
            Status::BudgetExhausted | Status::OracleRefused => Clause::None,
        }
    }
}

/// The termination flags needed to verify a point.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminationFlags {
    pub status: Status,
    pub order: usize,
    pub delta: f64,
    pub radius: f64,
    pub x_tilde: Vector,
}

impl From<&TerminationReport> for TerminationFlags {
    fn from(r: &TerminationReport) -> Self {
        Self {
            status: r.status,
            order: r.order,
            delta: r.delta,
            radius: r.radius,
            x_tilde: r.x_tilde.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuaranteeOutcome {
    pub clause: Clause,
    /// Bound of the status clause (`NaN` when the clause has none).
    pub bound: f64,
    /// Brute-force `phi_i` for `i = 1..=q`, each at the radius its check uses.
    pub phi: Vec<f64>,
    pub satisfied: bool,
}

fn lower_order_threshold(config: &SolverConfig, i: usize, delta: f64) -> f64 {
    config.eps[i - 1] * delta.powi(i as i32) / factorial(i)
}

/// Checks the guarantee matching the termination status, plus the
/// lower-order conditions `phi_i^delta <= eps_i delta^i / i!` for `i < j`.
///
/// For the approximate-minimizer clause every order `1..=q` is checked at
/// `delta` and the reported bound is the order-`q` threshold.
pub fn verify_guarantee(
    flags: &TerminationFlags,
    problem: &ProblemSpec,
    config: &SolverConfig,
    noise: NoiseProfile,
) -> Result<GuaranteeOutcome, HarnessError> {
    let clause = Clause::for_status(flags.status, config.enforce_global_step);
    let q = config.q;
    let x = &flags.x_tilde;
    let j = flags.order;
    let delta = flags.delta;
    let nu = flags.radius;
    let noise_coef = 4.0 * noise.theta_d / (config.gamma_zeta * config.omega);

    let (clause_radius, bound) = match clause {
        Clause::ApproximateMinimizer => (delta, lower_order_threshold(config, q, delta)),
        Clause::NoisePhi => (delta, noise_coef * delta),
        Clause::NoiseStep => (nu, noise_coef * nu.max(nu.powi(j as i32))),
        Clause::NoiseFunction => (nu, noise.theta_f / config.sigma * (1.0 + 1.0 / config.omega)),
        Clause::LowerOrdersOnly => (nu, f64::NAN),
        Clause::None => (delta, f64::NAN),
    };

    let mut phi = Vec::with_capacity(q);
    let mut satisfied = clause != Clause::None;
    for i in 1..=q {
        let at_clause_order = i == j
            && matches!(
                clause,
                Clause::NoiseStep | Clause::NoiseFunction | Clause::LowerOrdersOnly
            );
        let r = if at_clause_order { clause_radius } else { delta };
        let value = brute_force_phi(problem, x, i, r)?;
        phi.push(value);
        let limit = match clause {
            Clause::ApproximateMinimizer => Some(lower_order_threshold(config, i, delta)),
            Clause::None => None,
            _ if i < j => Some(lower_order_threshold(config, i, delta)),
            Clause::NoisePhi | Clause::NoiseStep | Clause::NoiseFunction if i == j => Some(bound),
            _ => None,
        };
        if let Some(limit) = limit {
            // Written so that a NaN value fails.
            let within = value <= GUARANTEE_SLACK * limit;
            satisfied &= within;
        }
    }
    Ok(GuaranteeOutcome {
        clause,
        bound,
        phi,
        satisfied,
    })
}

/// Number of accepted iterations whose true decrease falls short of
/// `(eta1 - 2 omega)` times the model decrement.
pub fn decrease_violations(trace: &[IterationRecord], problem: &ProblemSpec, config: &SolverConfig) -> usize {
    let factor = config.eta1 - 2.0 * config.omega;
    trace
        .iter()
        .filter(|it| it.accepted)
        .filter(|it| {
            let f0 = problem.objective.value(&it.x);
            let f1 = problem.objective.value(&(&it.x + &it.step));
            let gap = f0 - f1;
            // Rounding in the two evaluations is the only allowed discrepancy.
            let tol = 4.0 * f64::EPSILON * f0.abs().max(f1.abs());
            gap + tol < factor * it.dt
        })
        .count()
}

/// Re-checks a stored row against the exact problem: the termination
/// guarantee by brute force, the evaluation counts against freshly computed
/// bounds, the stored decrease-inequality tally and the derivative-evaluation
/// accounting. Returns the failed checks, empty when the row passes.
pub fn reverify_row(row: &ResultRow) -> Result<Vec<String>, HarnessError> {
    let problem = find_problem(&row.problem)?;
    let config = row.solver_config()?;
    let noise = NoiseProfile::new(row.theta_f, row.theta_d);
    let flags = TerminationFlags {
        status: row.status,
        order: row.order,
        delta: row.delta,
        radius: row.radius,
        x_tilde: row.x_tilde_vector(),
    };
    let mut failures = Vec::new();
    let outcome = verify_guarantee(&flags, &problem, &config, noise)?;
    if !outcome.satisfied {
        failures.push(format!(
            "guarantee {} violated (status {})",
            outcome.clause.as_str(),
            row.status
        ));
    }
    let bounds = theoretical_bounds(&config, &problem.constants(config.q), noise)?;
    if row.f_evals as f64 > bounds.f_evals {
        failures.push(format!(
            "{} function evaluations exceed the bound {:e}",
            row.f_evals, bounds.f_evals
        ));
    }
    if row.deriv_evals as f64 > bounds.deriv_evals {
        failures.push(format!(
            "{} derivative evaluations exceed the bound {:e}",
            row.deriv_evals, bounds.deriv_evals
        ));
    }
    if row.decrease_violations > 0 {
        failures.push(format!("{} decrease-inequality violations", row.decrease_violations));
    }
    if row.deriv_evals != 1 + row.successes + row.tightenings {
        failures.push(format!(
            "derivative evaluations {} != 1 + successes {} + tightenings {}",
            row.deriv_evals, row.successes, row.tightenings
        ));
    }
    Ok(failures)
}
