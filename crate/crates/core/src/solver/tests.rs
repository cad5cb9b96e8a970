use std::sync::Arc;

use approx::assert_relative_eq;
use nalgebra::{dvector, DMatrix};

use super::*;
use crate::model::DerivTensor;
use crate::oracle::{make_noise_model, NoiseFloor, NoiseKind, NoiseParams, NoisyOracle, Objective, OracleOutcome};

/// `0.5 x^T A x + b^T x`.
struct Quadratic {
    a: DMatrix<f64>,
    b: Vector,
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.a * x)) + self.b.dot(x)
    }

    fn derivative(&self, x: &Vector, order: usize) -> DerivTensor {
        match order {
            1 => DerivTensor::from_vector(&(&self.a * x + &self.b)),
            2 => DerivTensor::from_matrix(&self.a),
            l => DerivTensor::zeros(l, self.dim()),
        }
    }
}

fn quadratic(diag: &[f64], b: &[f64]) -> Arc<dyn Objective> {
    Arc::new(Quadratic {
        a: DMatrix::from_diagonal(&Vector::from_column_slice(diag)),
        b: Vector::from_column_slice(b),
    })
}

fn half_norm_squared() -> Arc<dyn Objective> {
    quadratic(&[1.0, 1.0], &[0.0, 0.0])
}

fn exact(obj: Arc<dyn Objective>) -> NoisyOracle {
    make_noise_model(NoiseKind::Exact, 0, NoiseParams::default(), obj)
}

/// Floors without perturbation: answers are exact but requests below the
/// floors are refused.
fn floored(obj: Arc<dyn Objective>, theta_f: f64, theta_d: f64) -> NoisyOracle {
    let params = NoiseParams {
        theta_f,
        theta_d,
        cap: 0.0,
        ..NoiseParams::default()
    };
    make_noise_model(NoiseKind::Bounded, 0, params, obj)
}

fn bounded(obj: Arc<dyn Objective>, theta_f: f64, theta_d: f64, seed: u64) -> NoisyOracle {
    let params = NoiseParams {
        theta_f,
        theta_d,
        ..NoiseParams::default()
    };
    make_noise_model(NoiseKind::Bounded, seed, params, obj)
}

fn terminated(h: Halt) -> Termination {
    match h {
        Halt::Terminated(t) => t,
        Halt::Failed(e) => panic!("unexpected failure {e}"),
    }
}

#[test]
fn optimality_radius_examples() {
    assert_eq!(optimality_radius(2.0, 1.0), 1.0);
    assert_eq!(optimality_radius(0.3, 1.0), 0.3);
    assert_eq!(optimality_radius(0.5, 0.5), 0.5);
}

#[test]
fn step4_examples() {
    let c = SolverConfig::uniform(1, 1e-3);
    assert_eq!(step4_radius(1.0, 0.05, &c), 0.5);
    let capped = SolverConfig {
        delta_max: 2.0,
        ..c.clone()
    };
    assert_eq!(step4_radius(1.0, 0.95, &capped), 2.0);
    assert_eq!(step4_radius(1.0, 0.5, &c), 1.0);
    // Boundaries: rho == eta1 keeps, rho == eta2 expands.
    assert_eq!(step4_radius(1.0, 0.1, &c), 1.0);
    assert_eq!(step4_radius(1.0, 0.9, &c), 4.0);
}

#[test]
fn default_config_is_valid() {
    for q in 1..=3 {
        let c = SolverConfig::uniform(q, 1e-3);
        c.validate(2, NoiseProfile::NONE).unwrap();
        assert_relative_eq!(c.omega, 0.0225, epsilon = 1e-17);
    }
    assert_eq!(SolverConfig::uniform(2, 1e-3).sigma, 1.0);
    assert_eq!(SolverConfig::uniform(3, 1e-3).sigma, 0.5);
}

#[test]
fn invalid_configs_are_rejected() {
    let base = SolverConfig::uniform(2, 1e-3);
    let cases: Vec<(SolverConfig, usize, NoiseProfile)> = vec![
        (
            SolverConfig {
                theta: 1e-4,
                ..base.clone()
            },
            2,
            NoiseProfile::NONE,
        ),
        (
            SolverConfig {
                theta: 1.5,
                ..base.clone()
            },
            2,
            NoiseProfile::NONE,
        ),
        (
            SolverConfig {
                delta0: 200.0,
                ..base.clone()
            },
            2,
            NoiseProfile::NONE,
        ),
        (
            SolverConfig {
                omega: 0.025,
                ..base.clone()
            },
            2,
            NoiseProfile::NONE,
        ),
        (
            SolverConfig {
                gamma2: 0.9,
                ..base.clone()
            },
            2,
            NoiseProfile::NONE,
        ),
        (
            SolverConfig {
                eta1: 0.95,
                ..base.clone()
            },
            2,
            NoiseProfile::NONE,
        ),
        (
            SolverConfig {
                zeta_d0: 0.2,
                ..base.clone()
            },
            2,
            NoiseProfile::NONE,
        ),
        (
            SolverConfig {
                eps: vec![1e-3],
                ..base.clone()
            },
            2,
            NoiseProfile::NONE,
        ),
        (
            SolverConfig {
                eps: vec![1e-3, 1.0],
                ..base.clone()
            },
            2,
            NoiseProfile::NONE,
        ),
        (base.clone(), 2, NoiseProfile::new(0.0, 0.1)),
        (SolverConfig::uniform(3, 1e-3), 11, NoiseProfile::NONE),
    ];
    for (c, n, noise) in cases {
        assert!(c.validate(n, noise).is_err(), "{c:?} accepted");
    }
    SolverConfig::uniform(2, 1e-3).validate(11, NoiseProfile::NONE).unwrap();
}

#[test]
fn config_keys_parse() {
    let mut c = SolverConfig::uniform(1, 1e-3);
    c.set("q", "2").unwrap();
    c.set("eps", "0.1, 0.01").unwrap();
    c.set("Delta0", "0.5").unwrap();
    c.set("enforce_global_step", "true").unwrap();
    c.set("gamma_zeta", "0.5").unwrap();
    assert_eq!(c.q, 2);
    assert_eq!(c.eps, vec![0.1, 0.01]);
    assert_eq!(c.delta0, 0.5);
    assert!(c.enforce_global_step);
    assert_eq!(c.gamma_zeta, 0.5);
    assert!(matches!(c.set("nope", "1"), Err(ConfigError::UnknownKey(_))));
    assert!(matches!(c.set("omega", "x"), Err(ConfigError::Parse { .. })));
}

#[test]
fn status_names_round_trip() {
    for s in Status::ALL {
        assert_eq!(s.as_str().parse::<Status>().unwrap(), s);
    }
    assert!("done".parse::<Status>().is_err());
}

#[test]
fn phi_decrement_relative_after_tightening() {
    let mut o = exact(half_norm_squared());
    let c = SolverConfig {
        omega: 0.02,
        ..SolverConfig::uniform(1, 1e-3)
    };
    let mut s = Solver::new(&mut o, &dvector![1.0, 0.0], c.clone()).unwrap();
    let r = s.compute_phi_decrement(1, 0.5).unwrap();
    assert_eq!(r.accuracy, AccuracyStatus::Relative);
    assert_relative_eq!(r.dt, 0.5, epsilon = 1e-15);
    // zeta = 0.1 fails 0.1 * 0.5 <= 0.02 * 0.5; zeta = 0.01 passes.
    assert_eq!(s.state().i_zeta, 1);
    assert!(s.state().zeta_d * 0.5 <= c.omega * r.dt);
}

#[test]
fn phi_decrement_absolute_at_stationary_point() {
    let mut o = exact(half_norm_squared());
    let c = SolverConfig {
        omega: 0.02,
        ..SolverConfig::uniform(1, 1e-3)
    };
    let mut s = Solver::new(&mut o, &dvector![0.0, 0.0], c.clone()).unwrap();
    let r = s.compute_phi_decrement(1, 0.5).unwrap();
    assert_eq!(r.accuracy, AccuracyStatus::Absolute);
    assert_eq!(r.dt, 0.0);
    let zeta = s.state().zeta_d;
    assert!(zeta * 0.5 <= c.omega * 0.5 * 1e-3 * 0.5);
    // One tightening fewer would not have sufficed.
    assert!(zeta / c.gamma_zeta * 0.5 > c.omega * 0.5 * 1e-3 * 0.5);
}

#[test]
fn phi_decrement_terminal_when_floor_equals_initial_accuracy() {
    let c = SolverConfig {
        kappa_zeta: 1.0,
        ..SolverConfig::uniform(1, 1e-3)
    };
    let mut o = floored(half_norm_squared(), 0.0, c.zeta_d0);
    let mut s = Solver::new(&mut o, &dvector![1.0, 0.0], c).unwrap();
    let t = terminated(s.compute_phi_decrement(1, 0.5).unwrap_err());
    assert_eq!(t.status, Status::InNoisePhi);
    assert_eq!((t.order, t.delta, t.radius), (1, 0.5, 0.5));
    assert_eq!(s.counters().deriv_evals, 1);
}

#[test]
fn step1_exits_at_first_order_away_from_stationarity() {
    let mut o = exact(half_norm_squared());
    let mut s = Solver::new(&mut o, &dvector![1.0, 0.0], SolverConfig::uniform(2, 0.4)).unwrap();
    let r = s.step1().unwrap();
    assert_eq!(r.j, 1);
    assert_relative_eq!(r.dt, 1.0, epsilon = 1e-12);
}

#[test]
fn step1_linear_function_always_order_one() {
    let lin = quadratic(&[0.0, 0.0], &[0.3, -0.4]);
    for x in [dvector![0.0, 0.0], dvector![5.0, -2.0], dvector![-1e3, 7.0]] {
        let mut o = exact(lin.clone());
        let mut s = Solver::new(&mut o, &x, SolverConfig::uniform(1, 0.1)).unwrap();
        let r = s.step1().unwrap();
        assert_eq!(r.j, 1);
        assert_relative_eq!(r.dt, 0.5, epsilon = 1e-12);
    }
}

#[test]
fn step1_near_strict_minimizer_is_approximate_minimizer() {
    let mut o = exact(half_norm_squared());
    let x = dvector![1e-6, -1e-6];
    let mut s = Solver::new(&mut o, &x, SolverConfig::uniform(2, 1e-3)).unwrap();
    let t = terminated(s.step1().unwrap_err());
    assert_eq!(t.status, Status::ApproximateMinimizer);
    assert_eq!((t.order, t.delta, t.radius), (2, 1.0, 1.0));
    // True measures: phi_1 = |g| delta, phi_2 = |g|^2 / 2 (interior maximizer).
    let g = x.norm();
    assert!(g <= 1e-3);
    assert!(g * g / 2.0 <= 1e-3 / 2.0);
}

#[test]
fn step2_small_region_returns_displacement() {
    let mut o = exact(half_norm_squared());
    let c = SolverConfig {
        delta0: 0.5,
        ..SolverConfig::uniform(1, 1e-3)
    };
    let mut s = Solver::new(&mut o, &dvector![1.0, 0.0], c).unwrap();
    let phi = s.step1().unwrap();
    let t = s.step2(&phi).unwrap();
    assert_eq!(t.s, phi.d_kj.d);
    assert_eq!(t.dt, phi.dt);
}

#[test]
fn step2_linear_function_reaches_boundary() {
    let mut o = exact(quadratic(&[0.0, 0.0], &[3.0, 4.0]));
    let c = SolverConfig {
        delta0: 2.0,
        ..SolverConfig::uniform(1, 1e-3)
    };
    let mut s = Solver::new(&mut o, &dvector![0.0, 0.0], c).unwrap();
    let phi = s.step1().unwrap();
    let t = s.step2(&phi).unwrap();
    assert_relative_eq!(t.s, dvector![-1.2, -1.6], epsilon = 1e-12);
    assert_relative_eq!(t.dt, 10.0, epsilon = 1e-12);
}

/// Gradient 0.4 and unit curvature: order 1 fails the Cauchy test (eps_1 =
/// 0.5) while order 2 passes. The optimality ball has radius theta = 0.1 but
/// the step is the interior minimizer of norm 0.4, whose decrement is
/// relatively smaller. zeta = 0.005 passes at the displacement and fails at
/// the step, and the floor 0.001 forbids tightening.
fn in_noise_s_setup() -> (Arc<dyn Objective>, Vector, SolverConfig, f64) {
    let c = SolverConfig {
        theta: 0.1,
        delta0: 2.0,
        zeta_d0: 0.005,
        ..SolverConfig::new(2, vec![0.5, 1e-3])
    };
    (half_norm_squared(), dvector![0.4, 0.0], c, 1e-3)
}

#[test]
fn step2_terminal_between_tightenings() {
    let (obj, x0, c, theta_d) = in_noise_s_setup();
    let mut o = floored(obj, 0.0, theta_d);
    let mut s = Solver::new(&mut o, &x0, c).unwrap();
    let phi = s.step1().unwrap();
    assert_eq!(phi.j, 2);
    assert_eq!(phi.accuracy, AccuracyStatus::Relative);
    let t = terminated(s.step2(&phi).unwrap_err());
    assert_eq!(t.status, Status::InNoiseS);
    assert_eq!(t.order, 2);
    assert_eq!(t.delta, 0.1);
    assert_relative_eq!(t.radius, 0.4, epsilon = 1e-9);
}

/// Objective `10 - x_1` so that f(0) = 10 and f((1, 0)) = 9.
fn affine_ten() -> Arc<dyn Objective> {
    Arc::new(Quadratic {
        a: DMatrix::zeros(2, 2),
        b: dvector![-1.0, 0.0],
    })
}

struct Shifted(Arc<dyn Objective>, f64);

impl Objective for Shifted {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: &Vector) -> f64 {
        self.0.value(x) + self.1
    }
    fn derivative(&self, x: &Vector, order: usize) -> DerivTensor {
        self.0.derivative(x, order)
    }
}

fn dummy_phi(j: usize, n: usize) -> Phi1Result {
    Phi1Result {
        j,
        d_kj: maximize_decrement(
            &TaylorModel::from_coefficients(
                Vector::zeros(n),
                (1..=j).map(|l| DerivTensor::zeros(l, n)).collect(),
                1.0,
            ),
            j,
            1.0,
            1.0,
        ),
        dt: 0.0,
        accuracy: AccuracyStatus::Absolute,
    }
}

#[test]
fn step3_ratio_example() {
    let mut o = exact(Arc::new(Shifted(affine_ten(), 10.0)));
    let mut s = Solver::new(&mut o, &dvector![0.0, 0.0], SolverConfig::uniform(1, 1e-3)).unwrap();
    let trial = TrialStep {
        j: 1,
        s: dvector![1.0, 0.0],
        dt: 2.0,
    };
    let (_, acc) = s.step3_accept(&dummy_phi(1, 2), trial).unwrap();
    assert_relative_eq!(acc.rho, 0.5, epsilon = 1e-15);
    assert!(acc.accepted);
    assert_eq!(s.state().x, dvector![1.0, 0.0]);
    assert_eq!(s.counters().f_evals, 2);
    assert_eq!(s.state().fbar, Some((9.0, s.config().omega * 2.0)));
}

#[test]
fn step3_gate_is_inclusive() {
    // omega and theta_f are powers of two so the gate is exactly 2.
    let c = SolverConfig {
        omega: 1.0 / 64.0,
        ..SolverConfig::uniform(1, 1e-3)
    };
    let mut o = floored(affine_ten(), 1.0 / 32.0, 0.0);
    let mut s = Solver::new(&mut o, &dvector![0.0, 0.0], c).unwrap();
    let trial = TrialStep {
        j: 1,
        s: dvector![0.5, 0.0],
        dt: 2.0,
    };
    let t = terminated(s.step3_accept(&dummy_phi(1, 2), trial).unwrap_err());
    assert_eq!(t.status, Status::InNoiseF);
    assert_eq!((t.order, t.delta, t.radius), (1, 1.0, 1.0));
    assert_eq!(s.counters().f_evals, 0);
}

#[test]
fn step3_reuses_cached_value_when_accurate_enough() {
    let mut o = exact(Arc::new(Shifted(affine_ten(), 10.0)));
    let mut s = Solver::new(&mut o, &dvector![0.0, 0.0], SolverConfig::uniform(1, 1e-3)).unwrap();
    s.state_mut().fbar = Some((10.0, 1e-6));
    let trial = TrialStep {
        j: 1,
        s: dvector![-1.0, 0.0],
        dt: 1.0,
    };
    let (_, acc) = s.step3_accept(&dummy_phi(1, 2), trial).unwrap();
    assert!(!acc.accepted);
    assert_eq!(s.counters().f_evals, 1);
    // A cached value that is too inaccurate is recomputed.
    s.state_mut().fbar = Some((10.0, 1.0));
    let trial = TrialStep {
        j: 1,
        s: dvector![-1.0, 0.0],
        dt: 1.0,
    };
    s.step3_accept(&dummy_phi(1, 2), trial).unwrap();
    assert_eq!(s.counters().f_evals, 3);
}

#[test]
fn step3_convex_quadratic_exact_model_gives_unit_ratio() {
    let obj = quadratic(&[1.0, 3.0], &[0.0, 0.0]);
    let mut o = exact(obj);
    // eps_1 large so that the second-order model is selected.
    let c = SolverConfig::new(2, vec![0.9, 1e-3]);
    let mut s = Solver::new(&mut o, &dvector![0.3, 0.1], c).unwrap();
    let phi = s.step1().unwrap();
    assert_eq!(phi.j, 2);
    let trial = s.step2(&phi).unwrap();
    let (_, acc) = s.step3_accept(&phi, trial).unwrap();
    assert_relative_eq!(acc.rho, 1.0, epsilon = 1e-12);
    assert!(acc.accepted);
}

#[test]
fn run_noiseless_quadratic_reaches_gradient_tolerance() {
    let obj = half_norm_squared();
    let mut o = exact(obj.clone());
    let r = run(&mut o, &dvector![1.0, 1.0], SolverConfig::uniform(1, 1e-5)).unwrap();
    assert_eq!(r.status, Status::ApproximateMinimizer);
    let g = obj.derivative(&r.x_tilde, 1).as_vector().norm();
    assert!(g <= 1e-5, "gradient norm {g}");
    assert_eq!(r.order, 1);
}

#[test]
fn run_with_derivative_noise_obeys_bound() {
    let obj = half_norm_squared();
    for seed in 0..5 {
        let mut o = bounded(obj.clone(), 0.0, 1e-2, seed);
        let c = SolverConfig::uniform(1, 1e-6);
        let r = run(&mut o, &dvector![1.0, 1.0], c.clone()).unwrap();
        assert!(
            matches!(r.status, Status::InNoisePhi | Status::InNoiseS),
            "{:?}",
            r.status
        );
        // phi_1 is |g| times the radius.
        let g = obj.derivative(&r.x_tilde, 1).as_vector().norm();
        let nu = if r.status == Status::InNoisePhi {
            r.delta
        } else {
            r.radius
        };
        let bound = 4.0 * 1e-2 / (c.gamma_zeta * c.omega) * nu.max(nu);
        assert!(g * nu <= bound, "{} > {}", g * nu, bound);
    }
}

#[test]
fn run_huge_function_noise_stops_immediately() {
    let mut o = floored(half_norm_squared(), 100.0, 0.0);
    let r = run(&mut o, &dvector![1.0, 1.0], SolverConfig::uniform(1, 1e-3)).unwrap();
    assert_eq!(r.status, Status::InNoiseF);
    assert_eq!(r.iterations, 0);
    assert_eq!(r.counters.f_evals, 0);
    assert_eq!(r.radius, r.delta.max(1.0));
}

#[test]
fn run_budget_exhausted() {
    let mut o = exact(quadratic(&[0.0, 0.0], &[1.0, 0.0]));
    let c = SolverConfig {
        max_iterations: 3,
        ..SolverConfig::uniform(1, 1e-3)
    };
    let r = run(&mut o, &dvector![0.0, 0.0], c).unwrap();
    assert_eq!(r.status, Status::BudgetExhausted);
    assert_eq!(r.iterations, 3);
    assert_eq!(r.trace.len(), 3);
}

#[test]
fn run_refused_when_floor_above_initial_accuracy() {
    let c = SolverConfig {
        kappa_zeta: 1.0,
        ..SolverConfig::uniform(1, 1e-3)
    };
    let mut o = floored(half_norm_squared(), 0.0, 0.5);
    let r = run(&mut o, &dvector![1.0, 1.0], c).unwrap();
    assert_eq!(r.status, Status::OracleRefused);
}

#[test]
fn function_noise_with_global_step_obeys_bound() {
    let obj = quadratic(&[0.0, 0.0], &[1e-3, 0.0]);
    let theta_f = 1e-3;
    let c = SolverConfig {
        enforce_global_step: true,
        delta0: 4.0,
        ..SolverConfig::uniform(1, 1e-4)
    };
    let mut o = floored(obj.clone(), theta_f, 0.0);
    let r = run(&mut o, &dvector![0.0, 0.0], c.clone()).unwrap();
    assert_eq!(r.status, Status::InNoiseF);
    assert_eq!(r.radius, 4.0);
    let phi = obj.derivative(&r.x_tilde, 1).as_vector().norm() * r.radius;
    assert!(phi <= theta_f / c.sigma * (1.0 + 1.0 / c.omega));
}

fn check_invariants(r: &TerminationReport, obj: &dyn Objective, c: &SolverConfig) {
    assert_eq!(
        r.counters.deriv_evals,
        1 + r.successes + r.counters.accuracy_tightenings
    );
    assert!(r.counters.f_evals <= 2 * (r.iterations + 1));
    assert_relative_eq!(
        r.zeta_d,
        c.zeta_at(r.counters.accuracy_tightenings),
        max_relative = 1e-15
    );
    let mut prev_zeta = c.zeta_d0;
    for rec in &r.trace {
        assert!(rec.zeta_d <= prev_zeta);
        prev_zeta = rec.zeta_d;
        assert!(rec.radius > 0.0 && rec.radius <= c.delta_max);
        if rec.accepted {
            let decrease = obj.value(&rec.x) - obj.value(&(&rec.x + &rec.step));
            assert!(
                decrease >= (c.eta1 - 2.0 * c.omega) * rec.dt,
                "decrease {decrease} < {}",
                (c.eta1 - 2.0 * c.omega) * rec.dt
            );
        }
    }
    match r.status {
        Status::InNoisePhi | Status::ApproximateMinimizer => assert_eq!(r.delta, r.radius),
        Status::InNoiseF => assert!(r.radius >= r.delta),
        _ => {}
    }
}

#[test]
fn invariants_on_noisy_runs() {
    let obj = quadratic(&[1.0, 10.0], &[0.0, 0.0]);
    for seed in 0..4 {
        for (tf, td) in [(0.0, 0.0), (1e-6, 1e-6), (1e-3, 1e-4), (0.0, 1e-2)] {
            for q in 1..=2 {
                let c = SolverConfig::uniform(q, 1e-3);
                let mut o = bounded(obj.clone(), tf, td, seed);
                let r = run(&mut o, &dvector![1.0, 1.0], c.clone()).unwrap();
                check_invariants(&r, obj.as_ref(), &c);
                if tf == 0.0 && td == 0.0 {
                    assert_eq!(r.status, Status::ApproximateMinimizer);
                }
            }
        }
    }
}

/// Exact oracle that refuses every function evaluation after a budget.
struct RefusingOracle {
    inner: NoisyOracle,
    refuse_after: u64,
}

impl Oracle for RefusingOracle {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn noise(&self) -> NoiseProfile {
        self.inner.noise()
    }
    fn eval_f(&mut self, x: &Vector, zeta_f: f64) -> OracleOutcome<f64> {
        if self.inner.counters().f_evals >= self.refuse_after {
            return Err(NoiseFloor {
                requested: zeta_f,
                floor: f64::INFINITY,
            });
        }
        self.inner.eval_f(x, zeta_f)
    }
    fn eval_derivs(&mut self, x: &Vector, j: usize, zeta_d: f64) -> OracleOutcome<Vec<DerivTensor>> {
        self.inner.eval_derivs(x, j, zeta_d)
    }
    fn counters(&self) -> EvalCounters {
        self.inner.counters()
    }
}

#[test]
fn refused_function_evaluation_is_reported() {
    let mut o = RefusingOracle {
        inner: exact(half_norm_squared()),
        refuse_after: 3,
    };
    let r = run(&mut o, &dvector![1.0, 1.0], SolverConfig::uniform(1, 1e-6)).unwrap();
    assert_eq!(r.status, Status::OracleRefused);
    assert_eq!(r.counters.f_evals, 3);
}
