//! The noise-aware trust-region method.
//!
//! Each iteration runs four steps:
//!
//! 1. **Termination test.** For `j = 1..=q` the optimality decrement over the
//!    ball of radius `delta_k = min(Delta_k, theta)` is computed and checked
//!    for accuracy; the first `j` with a large enough decrement becomes the
//!    model degree. If no order qualifies the current point is an approximate
//!    minimizer.
//! 2. **Step computation.** Inside the trust region the step improves on the
//!    optimality displacement, and its decrement is checked for accuracy.
//! 3. **Acceptance.** If the decrement is below what function noise can
//!    resolve the run stops; otherwise function values are requested at a
//!    relative accuracy and the ratio `rho` decides acceptance.
//! 4. **Radius update.**
//!
//! Derivative accuracy `zeta_d = zeta_d0 * gamma_zeta^i_zeta` is global: it is
//! only ever tightened, and every tightening forces a fresh derivative
//! evaluation. Whenever accuracy can no longer be tightened because of the
//! derivative noise floor, the run stops with an `in-noise-*` status whose
//! flags identify the guarantee that holds at the returned point.

mod bounds;

pub use bounds::{theoretical_bounds, BoundRecord, BoundsError, ProblemConstants};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::check::{check, AccuracyStatus, CheckConstants};
use crate::model::{factorial, TaylorModel, Vector};
use crate::oracle::{EvalCounters, NoiseProfile, Oracle};
use crate::subproblem::{compute_step, global_step, maximize_decrement, Displacement};

/// Largest dimension accepted when tensors of order three or more are used.
pub const MAX_HIGH_ORDER_DIM: usize = 10;

/// Algorithm constants. Build with [`SolverConfig::new`] and adjust fields;
/// [`SolverConfig::validate`] enforces the admissible ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Criticality order.
    pub q: usize,
    /// Per-order accuracy levels `eps_1..eps_q`, each in `(0, 1)`.
    pub eps: Vec<f64>,
    /// Relative accuracy of decrements and function values.
    pub omega: f64,
    /// Declared fraction of the optimality measure achieved by the
    /// ball-constrained maximizer.
    pub sigma: f64,
    /// Upper bound on the optimality radius.
    pub theta: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    /// Derivative-accuracy tightening factor.
    pub gamma_zeta: f64,
    pub delta0: f64,
    pub delta_max: f64,
    /// Upper bound on derivative accuracies.
    pub kappa_zeta: f64,
    /// Initial derivative accuracy.
    pub zeta_d0: f64,
    /// Recompute a global model maximizer before stopping for function noise.
    pub enforce_global_step: bool,
    /// Safeguard on the number of iterations.
    pub max_iterations: u64,
}

impl SolverConfig {
    /// Default constants for order `q` with accuracy levels `eps`.
    pub fn new(q: usize, eps: Vec<f64>) -> Self {
        let (eta1, eta2) = (0.1, 0.9);
        Self {
            q,
            omega: 0.9 * f64::min(eta1 / 2.0, (1.0 - eta2) / 4.0),
            sigma: if q <= 2 { 1.0 } else { 0.5 },
            theta: 1.0,
            eps,
            eta1,
            eta2,
            gamma1: 0.5,
            gamma2: 2.0,
            gamma3: 4.0,
            gamma_zeta: 0.1,
            delta0: 1.0,
            delta_max: 100.0,
            kappa_zeta: 0.1,
            zeta_d0: 0.1,
            enforce_global_step: false,
            max_iterations: 1_000_000,
        }
    }

    /// Same accuracy level for every order.
    pub fn uniform(q: usize, eps: f64) -> Self {
        Self::new(q, vec![eps; q])
    }

    pub fn eps_min(&self) -> f64 {
        self.eps.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn check_constants(&self, theta_d: f64) -> CheckConstants {
        CheckConstants {
            omega: self.omega,
            gamma_zeta: self.gamma_zeta,
            theta_d,
        }
    }

    /// `zeta_d0 * gamma_zeta^i`.
    pub fn zeta_at(&self, i_zeta: u64) -> f64 {
        self.zeta_d0 * self.gamma_zeta.powi(i_zeta as i32)
    }

    /// Checks every admissibility condition for a problem of dimension `dim`
    /// observed through an oracle with floors `noise`.
    pub fn validate(&self, dim: usize, noise: NoiseProfile) -> Result<(), ConfigError> {
        let bad = |name: &'static str, reason: String| Err(ConfigError::Invalid { name, reason });
        if self.q == 0 {
            return bad("q", "must be at least 1".into());
        }
        if self.eps.len() != self.q {
            return bad("eps", format!("expected {} values, got {}", self.q, self.eps.len()));
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return bad("eps", format!("{e} is outside (0, 1)"));
        }
        let eps_min = self.eps_min();
        if !(self.theta >= eps_min && self.theta <= 1.0) {
            return bad("theta", format!("{} is outside [{eps_min}, 1]", self.theta));
        }
        if !(self.delta0 > 0.0 && self.delta0 <= self.delta_max && self.delta_max.is_finite()) {
            return bad(
                "delta0",
                format!("need 0 < delta0 = {} <= delta_max = {}", self.delta0, self.delta_max),
            );
        }
        if !(self.eta1 > 0.0 && self.eta1 <= self.eta2 && self.eta2 < 1.0) {
            return bad(
                "eta1",
                format!("need 0 < eta1 = {} <= eta2 = {} < 1", self.eta1, self.eta2),
            );
        }
        if !(self.gamma1 > 0.0 && self.gamma1 < 1.0 && 1.0 < self.gamma2 && self.gamma2 < self.gamma3) {
            return bad(
                "gamma1",
                format!(
                    "need 0 < gamma1 = {} < 1 < gamma2 = {} < gamma3 = {}",
                    self.gamma1, self.gamma2, self.gamma3
                ),
            );
        }
        let omega_cap = f64::min(self.eta1 / 2.0, (1.0 - self.eta2) / 4.0);
        if !(self.omega > 0.0 && self.omega < omega_cap) {
            return bad("omega", format!("{} is outside (0, {omega_cap})", self.omega));
        }
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return bad("sigma", format!("{} is outside (0, 1]", self.sigma));
        }
        if !(self.gamma_zeta > 0.0 && self.gamma_zeta < 1.0) {
            return bad("gamma_zeta", format!("{} is outside (0, 1)", self.gamma_zeta));
        }
        let floor = eps_min.powi(self.q as i32 + 1);
        if !(self.kappa_zeta > floor && self.kappa_zeta.is_finite()) {
            return bad(
                "kappa_zeta",
                format!("{} must exceed eps_min^(q+1) = {floor}", self.kappa_zeta),
            );
        }
        if !(self.zeta_d0 > 0.0 && self.zeta_d0 <= self.kappa_zeta) {
            return bad(
                "zeta_d0",
                format!(
                    "need 0 < zeta_d0 = {} <= kappa_zeta = {}",
                    self.zeta_d0, self.kappa_zeta
                ),
            );
        }
        let below = noise.theta_d < self.kappa_zeta;
        if !below {
            return bad(
                "theta_d",
                format!(
                    "noise floor {} must lie below kappa_zeta = {}",
                    noise.theta_d, self.kappa_zeta
                ),
            );
        }
        if self.q >= 3 && dim > MAX_HIGH_ORDER_DIM {
            return bad(
                "q",
                format!("orders >= 3 need dimension <= {MAX_HIGH_ORDER_DIM}, got {dim}"),
            );
        }
        if self.max_iterations == 0 {
            return bad("max_iterations", "must be positive".into());
        }
        Ok(())
    }

    /// Sets the field named `key` from its textual form. Keys are the field
    /// names, matched case-insensitively; `eps` takes a comma-separated list.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let real = |v: &str| -> Result<f64, ConfigError> {
            v.parse::<f64>().map_err(|_| ConfigError::Parse {
                key: key.to_string(),
                value: v.to_string(),
            })
        };
        let parse_err = || ConfigError::Parse {
            key: key.to_string(),
            value: value.to_string(),
        };
        match key.trim().to_ascii_lowercase().as_str() {
            "q" => self.q = value.parse().map_err(|_| parse_err())?,
            "eps" => {
                self.eps = value
                    .split([',', ';'])
                    .map(|v| real(v.trim()))
                    .collect::<Result<_, _>>()?
            }
            "omega" => self.omega = real(value)?,
            "sigma" => self.sigma = real(value)?,
            "theta" => self.theta = real(value)?,
            "eta1" => self.eta1 = real(value)?,
            "eta2" => self.eta2 = real(value)?,
            "gamma1" => self.gamma1 = real(value)?,
            "gamma2" => self.gamma2 = real(value)?,
            "gamma3" => self.gamma3 = real(value)?,
            "gamma_zeta" => self.gamma_zeta = real(value)?,
            "delta0" => self.delta0 = real(value)?,
            "delta_max" => self.delta_max = real(value)?,
            "kappa_zeta" => self.kappa_zeta = real(value)?,
            "zeta_d0" => self.zeta_d0 = real(value)?,
            "enforce_global_step" => self.enforce_global_step = parse_bool(value).ok_or_else(parse_err)?,
            "max_iterations" => self.max_iterations = value.parse().map_err(|_| parse_err())?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }
}

/// Parses `true/false/1/0/yes/no/on/off`.
pub fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid {name}: {reason}")]
    Invalid { name: &'static str, reason: String },
    #[error("cannot parse {value:?} for {key}")]
    Parse { key: String, value: String },
    #[error("unknown configuration key {0:?}")]
    UnknownKey(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("starting point has dimension {got}, oracle expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    /// An outcome the algorithm's invariants rule out; indicates a defect in
    /// an inner solver or a misbehaving oracle.
    #[error("internal contract violated: {0}")]
    ContractViolation(String),
}

/// Why the run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    ApproximateMinimizer,
    InNoisePhi,
    InNoiseS,
    InNoiseF,
    /// The iteration safeguard fired.
    BudgetExhausted,
    /// The oracle refused a request; never happens in a well-configured run.
    OracleRefused,
}

impl Status {
    pub const ALL: [Status; 6] = [
        Status::ApproximateMinimizer,
        Status::InNoisePhi,
        Status::InNoiseS,
        Status::InNoiseF,
        Status::BudgetExhausted,
        Status::OracleRefused,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Status::ApproximateMinimizer => "approximate-minimizer",
            Status::InNoisePhi => "in-noise-phi",
            Status::InNoiseS => "in-noise-s",
            Status::InNoiseF => "in-noise-f",
            Status::BudgetExhausted => "budget-exhausted",
            Status::OracleRefused => "oracle-refused",
        }
    }

    /// True for the three statuses caused by noise floors.
    pub fn is_in_noise(self) -> bool {
        matches!(self, Status::InNoisePhi | Status::InNoiseS | Status::InNoiseF)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown status {0:?}")]
pub struct UnknownStatus(pub String);

impl FromStr for Status {
    type Err = UnknownStatus;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Status::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| UnknownStatus(s.to_string()))
    }
}

/// The flags set by the terminating step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Termination {
    pub status: Status,
    pub order: usize,
    pub delta: f64,
    pub radius: f64,
}

/// Early exit from a step: either a regular termination or an error.
#[derive(Debug, Clone, PartialEq)]
pub enum Halt {
    Terminated(Termination),
    Failed(SolverError),
}

impl From<SolverError> for Halt {
    fn from(e: SolverError) -> Self {
        Halt::Failed(e)
    }
}

fn stop(status: Status, order: usize, delta: f64, radius: f64) -> Halt {
    Halt::Terminated(Termination {
        status,
        order,
        delta,
        radius,
    })
}

/// Outcome of the decrement computation for one order.
#[derive(Debug, Clone, PartialEq)]
pub struct Phi1Result {
    pub j: usize,
    pub d_kj: Displacement,
    pub dt: f64,
    pub accuracy: AccuracyStatus,
}

/// Step 2 result: the trial step and its model decrement.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialStep {
    pub j: usize,
    pub s: Vector,
    pub dt: f64,
}

/// Step 3 result when the run continues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Acceptance {
    pub rho: f64,
    pub accepted: bool,
}

/// One completed iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: u64,
    pub x: Vector,
    /// Trust-region radius `Delta_k`.
    pub radius: f64,
    /// Optimality radius `delta_k`.
    pub delta: f64,
    /// Model degree chosen by the termination test.
    pub order: usize,
    /// Model decrement of the step.
    pub dt: f64,
    pub step: Vector,
    pub rho: f64,
    pub accepted: bool,
    /// Derivative accuracy in force at the end of the iteration.
    pub zeta_d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminationReport {
    pub status: Status,
    pub order: usize,
    pub delta: f64,
    pub radius: f64,
    pub x_tilde: Vector,
    /// Number of completed iterations (index of the terminating one).
    pub iterations: u64,
    pub counters: EvalCounters,
    /// Successful iterations.
    pub successes: u64,
    pub zeta_d: f64,
    /// Whether a model of degree three or more was used at some point, in
    /// which case the achieved fraction `sigma` is declared, not certified.
    pub high_order_used: bool,
    pub trace: Vec<IterationRecord>,
}

/// Mutable state of a run.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub k: u64,
    pub x: Vector,
    /// Trust-region radius `Delta_k`.
    pub radius: f64,
    pub i_zeta: u64,
    pub zeta_d: f64,
    /// Derivative model at `x` with accuracy `zeta_d`, when available.
    pub model: Option<TaylorModel>,
    /// `fbar(x)` with its guaranteed accuracy, when available.
    pub fbar: Option<(f64, f64)>,
    pub successes: u64,
    pub high_order_used: bool,
}

/// `delta_k = min(Delta_k, theta)`.
pub fn optimality_radius(radius: f64, theta: f64) -> f64 {
    assert!(radius > 0.0 && theta > 0.0, "radii must be positive");
    radius.min(theta)
}

/// Trust-region radius update: shrink by `gamma1` on failure, keep on
/// moderate success, expand by `gamma3` (capped at `delta_max`) on very
/// successful iterations.
pub fn step4_radius(radius: f64, rho: f64, config: &SolverConfig) -> f64 {
    assert!(radius > 0.0, "trust-region radius must be positive");
    let next = if rho < config.eta1 {
        config.gamma1 * radius
    } else if rho < config.eta2 {
        radius
    } else {
        config.gamma3 * radius
    };
    next.min(config.delta_max)
}

/// A single run of the method on one oracle.
pub struct Solver<'a, O: Oracle> {
    oracle: &'a mut O,
    config: SolverConfig,
    noise: NoiseProfile,
    state: SolverState,
    start_counters: EvalCounters,
    trace: Vec<IterationRecord>,
}

impl<'a, O: Oracle> Solver<'a, O> {
    pub fn new(oracle: &'a mut O, x0: &Vector, config: SolverConfig) -> Result<Self, SolverError> {
        let noise = oracle.noise();
        config.validate(oracle.dim(), noise)?;
        if x0.len() != oracle.dim() {
            return Err(SolverError::DimensionMismatch {
                expected: oracle.dim(),
                got: x0.len(),
            });
        }
        let start_counters = oracle.counters();
        let state = SolverState {
            k: 0,
            x: x0.clone(),
            radius: config.delta0,
            i_zeta: 0,
            zeta_d: config.zeta_d0,
            model: None,
            fbar: None,
            successes: 0,
            high_order_used: false,
        };
        Ok(Self {
            oracle,
            config,
            noise,
            state,
            start_counters,
            trace: Vec::new(),
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut SolverState {
        &mut self.state
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Evaluation counters accumulated by this run.
    pub fn counters(&self) -> EvalCounters {
        let mut c = self.oracle.counters() - self.start_counters;
        c.accuracy_tightenings = self.state.i_zeta;
        c
    }

    fn check_constants(&self) -> CheckConstants {
        self.config.check_constants(self.noise.theta_d)
    }

    fn tighten(&mut self) {
        self.state.i_zeta += 1;
        self.state.zeta_d = self.config.zeta_at(self.state.i_zeta);
        self.state.model = None;
    }

    /// Evaluates all derivative orders at the current point and accuracy
    /// unless a matching model is cached. Returns whether an evaluation took
    /// place.
    fn ensure_model(&mut self, order: usize, delta: f64) -> Result<bool, Halt> {
        if self.state.model.is_some() {
            return Ok(false);
        }
        match self.oracle.eval_derivs(&self.state.x, self.config.q, self.state.zeta_d) {
            Ok(ev) => {
                let model = TaylorModel::from_derivatives(self.state.x.clone(), &ev.value, ev.guaranteed_accuracy);
                self.state.model = Some(model);
                Ok(true)
            }
            Err(_) => Err(stop(Status::OracleRefused, order, delta, delta)),
        }
    }

    fn model(&self) -> &TaylorModel {
        self.state.model.as_ref().expect("derivative model must be available")
    }

    /// Computes an accuracy-checked optimality decrement of order `j` over the
    /// ball of radius `delta`, tightening derivative accuracy as needed.
    pub fn compute_phi_decrement(&mut self, j: usize, delta: f64) -> Result<Phi1Result, Halt> {
        assert!(j >= 1 && j <= self.config.q, "order {j} outside 1..=q");
        assert!(delta > 0.0 && delta <= 1.0, "optimality radius must lie in (0, 1]");
        if j >= 3 {
            self.state.high_order_used = true;
        }
        let xi = 0.5 * self.config.sigma * self.config.eps[j - 1];
        loop {
            self.ensure_model(j, delta)?;
            let d = maximize_decrement(self.model(), j, delta, self.config.sigma);
            let dt = d.decrement_value;
            let res = check(delta, dt, self.state.zeta_d, xi, j, &self.check_constants());
            match res.status {
                AccuracyStatus::Relative | AccuracyStatus::Absolute => {
                    return Ok(Phi1Result {
                        j,
                        d_kj: d,
                        dt,
                        accuracy: res.status,
                    })
                }
                AccuracyStatus::Insufficient => self.tighten(),
                AccuracyStatus::Terminal => return Err(stop(Status::InNoisePhi, j, delta, delta)),
            }
        }
    }

    /// Termination test: the first order whose decrement is large enough, or
    /// termination as an approximate minimizer.
    pub fn step1(&mut self) -> Result<Phi1Result, Halt> {
        let delta = optimality_radius(self.state.radius, self.config.theta);
        for j in 1..=self.config.q {
            let res = self.compute_phi_decrement(j, delta)?;
            let c = &self.config;
            let threshold = c.sigma * c.eps[j - 1] / (1.0 + c.omega) * delta.powi(j as i32) / factorial(j);
            if res.dt > threshold {
                return Ok(res);
            }
        }
        Err(stop(Status::ApproximateMinimizer, self.config.q, delta, delta))
    }

    /// Step computation from the order and displacement chosen by
    /// [`Self::step1`].
    pub fn step2(&mut self, phi: &Phi1Result) -> Result<TrialStep, Halt> {
        let delta = optimality_radius(self.state.radius, self.config.theta);
        if self.state.radius <= self.config.theta {
            return Ok(TrialStep {
                j: phi.j,
                s: phi.d_kj.d.clone(),
                dt: phi.dt,
            });
        }
        self.checked_step(phi, delta, false)
    }

    /// Steps 2.1-2.4 inside a trust region larger than `theta`, using either
    /// the local improvement of the optimality displacement or the global
    /// model maximizer.
    fn checked_step(&mut self, phi: &Phi1Result, delta: f64, global: bool) -> Result<TrialStep, Halt> {
        let j = phi.j;
        let c = &self.config;
        let xi0 = c.sigma * c.eps[j - 1] / (4.0 * (1.0 + c.omega));
        let theta = c.theta;
        let radius = self.state.radius;
        let mut start = phi.d_kj.clone();
        loop {
            if self.ensure_model(j, delta)? {
                start.decrement_value = self.model().decrement_order(j, &start.d);
            }
            let s = if global {
                global_step(self.model(), j, radius)
            } else {
                compute_step(self.model(), j, &start, radius)
            };
            let norm = s.norm();
            if norm == 0.0 {
                return Err(SolverError::ContractViolation(format!(
                    "step computation returned a zero step at order {j}"
                ))
                .into());
            }
            let xi = xi0 * (theta / theta.max(norm)).powi(j as i32);
            let res = check(
                norm,
                s.decrement_value,
                self.state.zeta_d,
                xi,
                j,
                &self.check_constants(),
            );
            match res.status {
                AccuracyStatus::Relative => {
                    return Ok(TrialStep {
                        j,
                        s: s.d,
                        dt: s.decrement_value,
                    })
                }
                AccuracyStatus::Absolute => {
                    return Err(SolverError::ContractViolation(format!(
                        "step decrement {:e} at order {j} judged absolute",
                        s.decrement_value
                    ))
                    .into())
                }
                AccuracyStatus::Insufficient => self.tighten(),
                AccuracyStatus::Terminal => return Err(stop(Status::InNoiseS, j, delta, norm)),
            }
        }
    }

    /// Noise gate, function evaluations and acceptance. On acceptance the
    /// iterate moves and the new function value is cached.
    pub fn step3_accept(&mut self, phi: &Phi1Result, trial: TrialStep) -> Result<(TrialStep, Acceptance), Halt> {
        let delta = optimality_radius(self.state.radius, self.config.theta);
        let omega = self.config.omega;
        let gate = self.noise.theta_f / omega;
        let mut trial = trial;
        if trial.dt <= gate {
            if self.config.enforce_global_step {
                trial = if self.state.radius <= self.config.theta {
                    // The current model is already checked over this ball.
                    let s = global_step(self.model(), trial.j, self.state.radius);
                    if s.decrement_value > trial.dt {
                        TrialStep {
                            j: trial.j,
                            s: s.d,
                            dt: s.decrement_value,
                        }
                    } else {
                        trial
                    }
                } else {
                    self.checked_step(phi, delta, true)?
                };
            }
            if trial.dt <= gate {
                let radius = delta.max(trial.s.norm());
                return Err(stop(Status::InNoiseF, trial.j, delta, radius));
            }
        }

        let zeta_f = omega * trial.dt;
        let x_trial = &self.state.x + &trial.s;
        let f_trial = match self.oracle.eval_f(&x_trial, zeta_f) {
            Ok(ev) => ev.value,
            Err(_) => return Err(stop(Status::OracleRefused, trial.j, delta, delta)),
        };
        let f_current = match self.state.fbar {
            Some((value, accuracy)) if accuracy <= zeta_f => value,
            _ => match self.oracle.eval_f(&self.state.x, zeta_f) {
                Ok(ev) => {
                    self.state.fbar = Some((ev.value, ev.guaranteed_accuracy));
                    ev.value
                }
                Err(_) => return Err(stop(Status::OracleRefused, trial.j, delta, delta)),
            },
        };
        let rho = (f_current - f_trial) / trial.dt;
        let accepted = rho >= self.config.eta1;
        if accepted {
            self.state.x = x_trial;
            self.state.fbar = Some((f_trial, zeta_f));
            self.state.model = None;
            self.state.successes += 1;
        }
        Ok((trial, Acceptance { rho, accepted }))
    }

    /// One full iteration. Returns `Ok(())` when the run continues.
    pub fn iterate(&mut self) -> Result<(), Halt> {
        let k = self.state.k;
        let x = self.state.x.clone();
        let radius = self.state.radius;
        let delta = optimality_radius(radius, self.config.theta);
        let phi = self.step1()?;
        let trial = self.step2(&phi)?;
        let (trial, acc) = self.step3_accept(&phi, trial)?;
        self.state.radius = step4_radius(radius, acc.rho, &self.config);
        self.trace.push(IterationRecord {
            k,
            x,
            radius,
            delta,
            order: trial.j,
            dt: trial.dt,
            step: trial.s,
            rho: acc.rho,
            accepted: acc.accepted,
            zeta_d: self.state.zeta_d,
        });
        self.state.k += 1;
        Ok(())
    }

    /// Runs until termination, the iteration safeguard, or an error.
    pub fn run(mut self) -> Result<TerminationReport, SolverError> {
        let term = loop {
            if self.state.k >= self.config.max_iterations {
                let delta = optimality_radius(self.state.radius, self.config.theta);
                break Termination {
                    status: Status::BudgetExhausted,
                    order: 0,
                    delta,
                    radius: delta,
                };
            }
            match self.iterate() {
                Ok(()) => {}
                Err(Halt::Terminated(t)) => break t,
                Err(Halt::Failed(e)) => return Err(e),
            }
        };
        Ok(self.into_report(term))
    }

    fn into_report(self, term: Termination) -> TerminationReport {
        let counters = self.counters();
        TerminationReport {
            status: term.status,
            order: term.order,
            delta: term.delta,
            radius: term.radius,
            x_tilde: self.state.x,
            iterations: self.state.k,
            counters,
            successes: self.state.successes,
            zeta_d: self.state.zeta_d,
            high_order_used: self.state.high_order_used,
            trace: self.trace,
        }
    }
}

/// Minimizes the objective behind `oracle` from `x0`.
pub fn run<O: Oracle>(oracle: &mut O, x0: &Vector, config: SolverConfig) -> Result<TerminationReport, SolverError> {
    Solver::new(oracle, x0, config)?.run()
}

#[cfg(test)]
mod tests;
