//! Parameter sweeps over problems, orders, accuracy levels, noise floors and
//! seeds.
//!
//! A sweep is described by a flat INI-style file. Grid keys take
//! comma-separated lists; every other key names a `SolverConfig` field and is
//! applied to all runs. Section headers are allowed and ignored.
//!
//! ```ini
//! problems = quadratic2, rosenbrock
//! q = 1, 2
//! eps = 1e-2, 1e-4
//! theta_f = 0
//! theta_d = 0, 1e-6, 1e-3
//! seeds = 0, 1
//! noise_model = bounded
//! global_step = false
//! kappa_zeta = 1
//! zeta_d0 = 1
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;
use rayon::prelude::*;

use crate::oracle::{NoiseKind, NoiseParams};
use crate::solver::{parse_bool, SolverConfig, Status};

use super::problems::problem_names;
use super::results::{write_results, ResultRow};
use super::{run_spec, HarnessError, RunSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub problems: Vec<String>,
    pub q: Vec<usize>,
    /// Accuracy levels; each grid value is used for every order.
    pub eps: Vec<f64>,
    pub theta_f: Vec<f64>,
    pub theta_d: Vec<f64>,
    pub seeds: Vec<u64>,
    pub noise_model: NoiseKind,
    pub global_step: bool,
    pub bits: u32,
    pub magnitude: f64,
    /// `SolverConfig` overrides applied to every run.
    pub overrides: Vec<(String, String)>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let params = NoiseParams::default();
        Self {
            problems: problem_names().into_iter().map(String::from).collect(),
            q: vec![1],
            eps: vec![1e-3],
            theta_f: vec![0.0],
            theta_d: vec![0.0],
            seeds: vec![0],
            noise_model: NoiseKind::Exact,
            global_step: false,
            bits: params.bits,
            magnitude: params.magnitude,
            overrides: Vec::new(),
        }
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, HarnessError> {
    let items: Vec<&str> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(HarnessError::Spec(format!("grid {key} is empty")));
    }
    items
        .into_iter()
        .map(|s| {
            s.parse()
                .map_err(|_| HarnessError::Spec(format!("cannot parse {s:?} in {key}")))
        })
        .collect()
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value
        .trim()
        .parse()
        .map_err(|_| HarnessError::Spec(format!("cannot parse {value:?} for {key}")))
}

impl SweepSpec {
    pub fn from_ini_str(text: &str) -> Result<Self, HarnessError> {
        let ini = Ini::load_from_str(text).map_err(|e| HarnessError::Spec(e.to_string()))?;
        let mut spec = SweepSpec::default();
        for (_, props) in ini.iter() {
            for (key, value) in props.iter() {
                spec.apply(key, value)?;
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        Self::from_ini_str(&std::fs::read_to_string(path)?)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        match key.trim().to_ascii_lowercase().as_str() {
            "problems" | "problem" => self.problems = parse_list(key, value)?,
            "q" => self.q = parse_list(key, value)?,
            "eps" => self.eps = parse_list(key, value)?,
            "theta_f" | "noise_f" => self.theta_f = parse_list(key, value)?,
            "theta_d" | "noise_d" => self.theta_d = parse_list(key, value)?,
            "seeds" | "seed" => self.seeds = parse_list(key, value)?,
            "noise_model" => self.noise_model = NoiseKind::from_str(value)?,
            "global_step" | "enforce_global_step" => {
                self.global_step =
                    parse_bool(value).ok_or_else(|| HarnessError::Spec(format!("cannot parse {value:?} for {key}")))?
            }
            "bits" => self.bits = parse_one(key, value)?,
            "magnitude" => self.magnitude = parse_one(key, value)?,
            _ => {
                // Validate the key and value eagerly.
                SolverConfig::uniform(1, 0.5).set(key, value)?;
                self.overrides.push((key.trim().to_string(), value.trim().to_string()));
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let names = problem_names();
        if let Some(p) = self.problems.iter().find(|p| !names.contains(&p.as_str())) {
            return Err(HarnessError::UnknownProblem(p.clone()));
        }
        if self.problems.is_empty()
            || self.q.is_empty()
            || self.eps.is_empty()
            || self.theta_f.is_empty()
            || self.theta_d.is_empty()
            || self.seeds.is_empty()
        {
            return Err(HarnessError::Spec("every grid needs at least one value".into()));
        }
        Ok(())
    }

    /// Grid points in row order: problems, then `q`, `eps`, `theta_f`,
    /// `theta_d` and seeds, the last varying fastest.
    pub fn runs(&self) -> Vec<RunSpec> {
        let mut out = Vec::new();
        for problem in &self.problems {
            for &q in &self.q {
                for &eps in &self.eps {
                    for &theta_f in &self.theta_f {
                        for &theta_d in &self.theta_d {
                            for &seed in &self.seeds {
                                let mut spec = RunSpec::new(problem, q, vec![eps; q]);
                                spec.noise_model = self.noise_model;
                                spec.theta_f = theta_f;
                                spec.theta_d = theta_d;
                                spec.seed = seed;
                                spec.bits = self.bits;
                                spec.magnitude = self.magnitude;
                                spec.global_step = self.global_step;
                                spec.overrides = self.overrides.clone();
                                out.push(spec);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Runs every grid point in parallel and returns the rows in grid order.
    pub fn execute(&self, timing: bool) -> Result<Vec<ResultRow>, HarnessError> {
        self.runs()
            .par_iter()
            .map(|spec| run_spec(spec, timing).map(|o| o.row))
            .collect()
    }
}

/// Runs the sweep and writes one row per grid point to `out_path`.
pub fn run_sweep(spec: &SweepSpec, out_path: &Path, timing: bool) -> Result<Vec<ResultRow>, HarnessError> {
    let rows = spec.execute(timing)?;
    write_results(out_path, &rows)?;
    Ok(rows)
}

/// Rows grouped by every grid coordinate except one, each group sorted by
/// the excluded coordinate.
fn grouped_by(
    rows: &[ResultRow],
    key: impl Fn(&ResultRow) -> String,
    coordinate: impl Fn(&ResultRow) -> f64,
) -> BTreeMap<String, Vec<&ResultRow>> {
    let mut groups: BTreeMap<String, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(key(r)).or_default().push(r);
    }
    for g in groups.values_mut() {
        g.sort_by(|a, b| coordinate(a).total_cmp(&coordinate(b)));
    }
    groups
}

/// Groups in which `f_evals` increases with `theta_f` (all other grid
/// coordinates fixed). Ties are allowed.
pub fn monotone_f_evals_violations(rows: &[ResultRow]) -> Vec<String> {
    let groups = grouped_by(
        rows,
        |r| {
            format!(
                "{} q={} eps={:e} theta_d={:e} seed={} {}",
                r.problem, r.q, r.eps_min, r.theta_d, r.seed, r.noise_model
            )
        },
        |r| r.theta_f,
    );
    groups
        .into_iter()
        .filter(|(_, g)| g.windows(2).any(|w| w[1].f_evals > w[0].f_evals))
        .map(|(k, _)| k)
        .collect()
}

/// Outcome of a derivative-noise frontier check.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrontierReport {
    /// Groups where an approximate minimizer follows an in-noise status as
    /// `theta_d` grows.
    pub non_monotone: Vec<String>,
    /// Groups whose statuses do not change from approximate minimizer to
    /// in-noise anywhere on the grid.
    pub no_transition: Vec<String>,
}

/// Checks that, for fixed problem, order, accuracy, function floor and seed,
/// statuses move from approximate-minimizer to in-noise as `theta_d` grows
/// and never back.
pub fn frontier_violations(rows: &[ResultRow]) -> FrontierReport {
    let groups = grouped_by(
        rows,
        |r| {
            format!(
                "{} q={} eps={:e} theta_f={:e} seed={} {}",
                r.problem, r.q, r.eps_min, r.theta_f, r.seed, r.noise_model
            )
        },
        |r| r.theta_d,
    );
    let mut report = FrontierReport::default();
    for (key, g) in groups {
        let statuses: Vec<Status> = g.iter().map(|r| r.status).collect();
        let first_noise = statuses.iter().position(|s| s.is_in_noise());
        let monotone = match first_noise {
            Some(i) => statuses[i..].iter().all(|s| s.is_in_noise()),
            None => true,
        };
        if !monotone {
            report.non_monotone.push(key.clone());
        }
        let transition =
            statuses.first() == Some(&Status::ApproximateMinimizer) && statuses.last().is_some_and(|s| s.is_in_noise());
        if !transition {
            report.no_transition.push(key);
        }
    }
    report
}
