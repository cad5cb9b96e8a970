//! One CSV row per run, with a fixed, versioned schema.
//!
//! Floats are written with 17 significant digits so that files round-trip
//! exactly; list-valued cells are joined with `;`. The solver configuration is
//! stored as space-separated `key=value` pairs so that rows can be re-verified
//! offline.

use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::model::Vector;
use crate::oracle::{NoiseKind, NoiseProfile};
use crate::solver::{parse_bool, BoundRecord, SolverConfig, Status, TerminationReport};

use super::problems::ProblemSpec;
use super::verify::GuaranteeOutcome;
use super::{HarnessError, RunSpec};

pub const SCHEMA_VERSION: u32 = 1;

pub const HEADER: [&str; 34] = [
    "schema",
    "problem",
    "q",
    "eps_min",
    "eps",
    "theta_f",
    "theta_d",
    "noise_model",
    "seed",
    "global_step",
    "status",
    "order",
    "delta",
    "radius",
    "iterations",
    "successes",
    "f_evals",
    "deriv_evals",
    "tightenings",
    "x_tilde",
    "f_tilde",
    "phi_bruteforce",
    "guarantee_clause",
    "guarantee_bound",
    "guarantee_satisfied",
    "decrease_violations",
    "bound_f_evals",
    "bound_deriv_evals",
    "bound_f_evals_formula",
    "bound_deriv_evals_formula",
    "evals_within_bounds",
    "sigma_declared",
    "config",
    "runtime_ms",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub problem: String,
    pub q: usize,
    pub eps_min: f64,
    pub eps: Vec<f64>,
    /// Floors of the oracle actually used.
    pub theta_f: f64,
    pub theta_d: f64,
    pub noise_model: NoiseKind,
    pub seed: u64,
    pub global_step: bool,
    pub status: Status,
    pub order: usize,
    pub delta: f64,
    pub radius: f64,
    pub iterations: u64,
    pub successes: u64,
    pub f_evals: u64,
    pub deriv_evals: u64,
    pub tightenings: u64,
    pub x_tilde: Vec<f64>,
    /// Exact objective value at `x_tilde`.
    pub f_tilde: f64,
    /// Brute-force `phi_i`, `i = 1..=q`.
    pub phi_bruteforce: Vec<f64>,
    pub guarantee_clause: String,
    pub guarantee_bound: f64,
    pub guarantee_satisfied: bool,
    pub decrease_violations: usize,
    pub bound_f_evals: f64,
    pub bound_deriv_evals: f64,
    pub bound_f_evals_formula: f64,
    pub bound_deriv_evals_formula: f64,
    pub evals_within_bounds: bool,
    /// A model of degree three or more was used, so the maximizer fraction
    /// `sigma` was declared rather than certified.
    pub sigma_declared: bool,
    pub config: String,
    pub runtime_ms: Option<f64>,
}

impl ResultRow {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        spec: &RunSpec,
        config: &SolverConfig,
        noise: NoiseProfile,
        problem: &ProblemSpec,
        report: &TerminationReport,
        guarantee: &GuaranteeOutcome,
        bounds: &BoundRecord,
        decrease_violations: usize,
        runtime_ms: Option<f64>,
    ) -> Self {
        let c = &report.counters;
        Self {
            problem: spec.problem.clone(),
            q: config.q,
            eps_min: config.eps_min(),
            eps: config.eps.clone(),
            theta_f: noise.theta_f,
            theta_d: noise.theta_d,
            noise_model: spec.noise_model,
            seed: spec.seed,
            global_step: config.enforce_global_step,
            status: report.status,
            order: report.order,
            delta: report.delta,
            radius: report.radius,
            iterations: report.iterations,
            successes: report.successes,
            f_evals: c.f_evals,
            deriv_evals: c.deriv_evals,
            tightenings: c.accuracy_tightenings,
            x_tilde: report.x_tilde.iter().copied().collect(),
            f_tilde: problem.objective.value(&report.x_tilde),
            phi_bruteforce: guarantee.phi.clone(),
            guarantee_clause: guarantee.clause.as_str().to_string(),
            guarantee_bound: guarantee.bound,
            guarantee_satisfied: guarantee.satisfied,
            decrease_violations,
            bound_f_evals: bounds.f_evals,
            bound_deriv_evals: bounds.deriv_evals,
            bound_f_evals_formula: bounds.f_evals_formula,
            bound_deriv_evals_formula: bounds.deriv_evals_formula,
            evals_within_bounds: c.f_evals as f64 <= bounds.f_evals && c.deriv_evals as f64 <= bounds.deriv_evals,
            sigma_declared: report.high_order_used,
            config: config_to_string(config),
            runtime_ms,
        }
    }

    /// Guarantee, decrease inequality and evaluation bounds all hold.
    pub fn passed(&self) -> bool {
        self.guarantee_satisfied && self.evals_within_bounds && self.decrease_violations == 0
    }

    pub fn x_tilde_vector(&self) -> Vector {
        Vector::from_vec(self.x_tilde.clone())
    }

    pub fn solver_config(&self) -> Result<SolverConfig, HarnessError> {
        config_from_string(&self.config)
    }

    fn fields(&self) -> Vec<String> {
        vec![
            SCHEMA_VERSION.to_string(),
            self.problem.clone(),
            self.q.to_string(),
            float(self.eps_min),
            list(&self.eps),
            float(self.theta_f),
            float(self.theta_d),
            self.noise_model.to_string(),
            self.seed.to_string(),
            self.global_step.to_string(),
            self.status.to_string(),
            self.order.to_string(),
            float(self.delta),
            float(self.radius),
            self.iterations.to_string(),
            self.successes.to_string(),
            self.f_evals.to_string(),
            self.deriv_evals.to_string(),
            self.tightenings.to_string(),
            list(&self.x_tilde),
            float(self.f_tilde),
            list(&self.phi_bruteforce),
            self.guarantee_clause.clone(),
            float(self.guarantee_bound),
            self.guarantee_satisfied.to_string(),
            self.decrease_violations.to_string(),
            float(self.bound_f_evals),
            float(self.bound_deriv_evals),
            float(self.bound_f_evals_formula),
            float(self.bound_deriv_evals_formula),
            self.evals_within_bounds.to_string(),
            self.sigma_declared.to_string(),
            self.config.clone(),
            self.runtime_ms.map(float).unwrap_or_default(),
        ]
    }

    fn from_fields(rec: &csv::StringRecord, line: u64) -> Result<Self, HarnessError> {
        let err = |reason: String| HarnessError::Row { line, reason };
        if rec.len() != HEADER.len() {
            return Err(err(format!("expected {} fields, got {}", HEADER.len(), rec.len())));
        }
        let get = |i: usize| &rec[i];
        fn parse<T: FromStr>(s: &str, name: &str, line: u64) -> Result<T, HarnessError> {
            s.parse().map_err(|_| HarnessError::Row {
                line,
                reason: format!("cannot parse {name} from {s:?}"),
            })
        }
        let boolean = |i: usize| parse_bool(get(i)).ok_or_else(|| err(format!("bad flag in {}", HEADER[i])));
        let floats = |i: usize| -> Result<Vec<f64>, HarnessError> {
            let s = get(i);
            if s.is_empty() {
                return Ok(Vec::new());
            }
            s.split(';').map(|v| parse(v, HEADER[i], line)).collect()
        };
        let schema: u32 = parse(get(0), "schema", line)?;
        if schema != SCHEMA_VERSION {
            return Err(err(format!("unsupported schema {schema}")));
        }
        let status = Status::from_str(get(10)).map_err(|e| err(e.to_string()))?;
        let noise_model = NoiseKind::from_str(get(7)).map_err(|e| err(e.to_string()))?;
        let runtime_ms = match get(33) {
            "" => None,
            s => Some(parse(s, "runtime_ms", line)?),
        };
        Ok(Self {
            problem: get(1).to_string(),
            q: parse(get(2), "q", line)?,
            eps_min: parse(get(3), "eps_min", line)?,
            eps: floats(4)?,
            theta_f: parse(get(5), "theta_f", line)?,
            theta_d: parse(get(6), "theta_d", line)?,
            noise_model,
            seed: parse(get(8), "seed", line)?,
            global_step: boolean(9)?,
            status,
            order: parse(get(11), "order", line)?,
            delta: parse(get(12), "delta", line)?,
            radius: parse(get(13), "radius", line)?,
            iterations: parse(get(14), "iterations", line)?,
            successes: parse(get(15), "successes", line)?,
            f_evals: parse(get(16), "f_evals", line)?,
            deriv_evals: parse(get(17), "deriv_evals", line)?,
            tightenings: parse(get(18), "tightenings", line)?,
            x_tilde: floats(19)?,
            f_tilde: parse(get(20), "f_tilde", line)?,
            phi_bruteforce: floats(21)?,
            guarantee_clause: get(22).to_string(),
            guarantee_bound: parse(get(23), "guarantee_bound", line)?,
            guarantee_satisfied: boolean(24)?,
            decrease_violations: parse(get(25), "decrease_violations", line)?,
            bound_f_evals: parse(get(26), "bound_f_evals", line)?,
            bound_deriv_evals: parse(get(27), "bound_deriv_evals", line)?,
            bound_f_evals_formula: parse(get(28), "bound_f_evals_formula", line)?,
            bound_deriv_evals_formula: parse(get(29), "bound_deriv_evals_formula", line)?,
            evals_within_bounds: boolean(30)?,
            sigma_declared: boolean(31)?,
            config: get(32).to_string(),
            runtime_ms,
        })
    }
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| float(*x)).collect::<Vec<_>>().join(";")
}

/// Every configuration field as `key=value`, space separated.
pub fn config_to_string(c: &SolverConfig) -> String {
    let eps = c.eps.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(",");
    format!(
        "q={} eps={} omega={} sigma={} theta={} eta1={} eta2={} gamma1={} gamma2={} gamma3={} gamma_zeta={} \
         delta0={} delta_max={} kappa_zeta={} zeta_d0={} enforce_global_step={} max_iterations={}",
        c.q,
        eps,
        c.omega,
        c.sigma,
        c.theta,
        c.eta1,
        c.eta2,
        c.gamma1,
        c.gamma2,
        c.gamma3,
        c.gamma_zeta,
        c.delta0,
        c.delta_max,
        c.kappa_zeta,
        c.zeta_d0,
        c.enforce_global_step,
        c.max_iterations
    )
}

pub fn config_from_string(s: &str) -> Result<SolverConfig, HarnessError> {
    let mut c = SolverConfig::uniform(1, 0.5);
    for pair in s.split_whitespace() {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| HarnessError::Spec(format!("malformed configuration entry {pair:?}")))?;
        c.set(k, v)?;
    }
    Ok(c)
}

/// Writes the header and `rows`.
pub fn write_rows<W: Write>(out: W, rows: &[ResultRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for row in rows {
        w.write_record(row.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path)?;
    write_rows(std::io::BufWriter::new(file), rows)
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<ResultRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(HarnessError::Row {
            line: 1,
            reason: "unexpected header".into(),
        });
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            ResultRow::from_fields(&rec, line)
        })
        .collect()
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, HarnessError> {
    read_rows(std::io::BufReader::new(std::fs::File::open(path)?))
}
