//! Test problems with exact derivatives, known lower bounds and Lipschitz
//! constants.

use std::sync::Arc;

use crate::model::{tensor_norm, DerivTensor, Vector};
use crate::oracle::Objective;
use crate::solver::ProblemConstants;

use super::HarnessError;

/// Highest derivative order every suite objective provides (one more than
/// the largest supported criticality order, for Lipschitz estimates).
pub const MAX_DERIVATIVE_ORDER: usize = 4;

/// Relative tolerance of the finite-difference consistency check.
pub const FD_TOLERANCE: f64 = 1e-4;

/// A named test problem.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: &'static str,
    pub objective: Arc<dyn Objective>,
    pub x0: Vector,
    pub f_low: f64,
    /// `L_{f,j}` for `j = 1..=3`: Lipschitz constants of the `j`-th derivative,
    /// exact for quadratics and estimated on a box otherwise.
    pub lipschitz: Vec<f64>,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("x0", &self.x0)
            .field("f_low", &self.f_low)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// Builds a problem after checking its derivatives against finite
    /// differences at a few deterministic points.
    pub fn new(
        name: &'static str,
        objective: Arc<dyn Objective>,
        x0: Vector,
        f_low: f64,
        lipschitz: Vec<f64>,
    ) -> Result<Self, HarnessError> {
        let spec = Self {
            name,
            objective,
            x0,
            f_low,
            lipschitz,
        };
        spec.check_derivatives()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    /// Compares each derivative of order `l` with central differences of the
    /// order `l - 1` derivative.
    pub fn check_derivatives(&self) -> Result<(), HarnessError> {
        let n = self.dim();
        let h = 1e-5;
        let mut points = vec![self.x0.clone()];
        points.push(Vector::from_fn(n, |i, _| 0.3 + 0.1 * i as f64));
        points.push(Vector::from_fn(n, |i, _| -0.7 + 0.05 * (i * i) as f64));
        for x in &points {
            for order in 1..=MAX_DERIVATIVE_ORDER {
                let analytic = self.objective.derivative(x, order);
                for i in 0..n {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let fd: Vec<f64> = if order == 1 {
                        vec![(self.objective.value(&xp) - self.objective.value(&xm)) / (2.0 * h)]
                    } else {
                        let p = self.objective.derivative(&xp, order - 1);
                        let m = self.objective.derivative(&xm, order - 1);
                        p.data()
                            .iter()
                            .zip(m.data())
                            .map(|(a, b)| (a - b) / (2.0 * h))
                            .collect()
                    };
                    // Slice of the analytic tensor with last index i.
                    let exact: Vec<f64> = analytic.data().iter().skip(i).step_by(n).copied().collect();
                    let scale = exact.iter().chain(&fd).fold(1.0f64, |m, v| m.max(v.abs()));
                    let err = exact.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                    if err > FD_TOLERANCE * scale {
                        return Err(HarnessError::InconsistentDerivative {
                            problem: self.name.to_string(),
                            order,
                            error: err / scale,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Constants for the evaluation bounds at order `q`. Induced norms of
    /// derivatives of order three and more are over-estimated by the
    /// Frobenius norm so that the bounds stay valid.
    pub fn constants(&self, q: usize) -> ProblemConstants {
        let deriv_norms_x0 = (1..=q)
            .map(|l| {
                let t = self.objective.derivative(&self.x0, l);
                upper_tensor_norm(&t)
            })
            .collect();
        ProblemConstants {
            f0: self.objective.value(&self.x0),
            f_low: self.f_low,
            lipschitz: self.lipschitz[..q.min(self.lipschitz.len())].to_vec(),
            deriv_norms_x0,
        }
    }
}

/// Induced norm for orders one and two, Frobenius norm beyond.
pub fn upper_tensor_norm(t: &DerivTensor) -> f64 {
    if t.order() <= 2 {
        tensor_norm(t, 1)
    } else {
        t.frobenius_norm()
    }
}

/// Largest derivative norm of order `order` on a uniform grid over
/// `[-half_width, half_width]^2`.
fn box_sup_2d(obj: &dyn Objective, order: usize, half_width: f64) -> f64 {
    let m = 41;
    let mut best = 0.0f64;
    for i in 0..m {
        for k in 0..m {
            let x = Vector::from_vec(vec![
                -half_width + 2.0 * half_width * i as f64 / (m - 1) as f64,
                -half_width + 2.0 * half_width * k as f64 / (m - 1) as f64,
            ]);
            best = best.max(upper_tensor_norm(&obj.derivative(&x, order)));
        }
    }
    best
}

/// Lipschitz estimates `L_{f,j} = sup |grad^{j+1} f|` over the box
/// `[-2, 2]^2`, `j = 1..=3`.
fn estimated_lipschitz(obj: &dyn Objective) -> Vec<f64> {
    (1..=3).map(|j| box_sup_2d(obj, j + 1, 2.0)).collect()
}

/// `0.5 x^T diag(a) x`.
#[derive(Debug, Clone)]
pub struct DiagonalQuadratic {
    pub diag: Vec<f64>,
}

impl Objective for DiagonalQuadratic {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn value(&self, x: &Vector) -> f64 {
        0.5 * self.diag.iter().zip(x.iter()).map(|(a, v)| a * v * v).sum::<f64>()
    }

    fn derivative(&self, x: &Vector, order: usize) -> DerivTensor {
        let n = self.dim();
        match order {
            1 => DerivTensor::from_vector(&Vector::from_fn(n, |i, _| self.diag[i] * x[i])),
            2 => DerivTensor::from_fn(2, n, |idx| if idx[0] == idx[1] { self.diag[idx[0]] } else { 0.0 }),
            l => DerivTensor::zeros(l, n),
        }
    }
}

/// Two-variable objective given by its mixed partial derivatives.
trait Partials2: Send + Sync {
    /// `d^(a+b) f / dx^a dy^b` at `(x, y)`.
    fn partial(&self, x: f64, y: f64, a: usize, b: usize) -> f64;
}

struct TwoD<P>(P);

impl<P: Partials2> Objective for TwoD<P> {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &Vector) -> f64 {
        self.0.partial(x[0], x[1], 0, 0)
    }

    fn derivative(&self, x: &Vector, order: usize) -> DerivTensor {
        DerivTensor::from_fn(order, 2, |idx| {
            let b = idx.iter().filter(|&&i| i == 1).count();
            self.0.partial(x[0], x[1], order - b, b)
        })
    }
}

/// `100 (y - x^2)^2 + (1 - x)^2`.
struct Rosenbrock;

impl Partials2 for Rosenbrock {
    fn partial(&self, x: f64, y: f64, a: usize, b: usize) -> f64 {
        let r = y - x * x;
        match (a, b) {
            (0, 0) => 100.0 * r * r + (1.0 - x) * (1.0 - x),
            (1, 0) => -400.0 * x * r - 2.0 * (1.0 - x),
            (0, 1) => 200.0 * r,
            (2, 0) => 1200.0 * x * x - 400.0 * y + 2.0,
            (1, 1) => -400.0 * x,
            (0, 2) => 200.0,
            (3, 0) => 2400.0 * x,
            (2, 1) => -400.0,
            (4, 0) => 2400.0,
            _ => 0.0,
        }
    }
}

/// `x^2/2 - y^2/2 + y^4/4`: a saddle at the origin, minimizers `(0, +-1)`.
struct SaddleQuartic;

impl Partials2 for SaddleQuartic {
    fn partial(&self, x: f64, y: f64, a: usize, b: usize) -> f64 {
        match (a, b) {
            (0, 0) => 0.5 * x * x - 0.5 * y * y + 0.25 * y.powi(4),
            (1, 0) => x,
            (0, 1) => -y + y.powi(3),
            (2, 0) => 1.0,
            (0, 2) => -1.0 + 3.0 * y * y,
            (0, 3) => 6.0 * y,
            (0, 4) => 6.0,
            _ => 0.0,
        }
    }
}

/// `(x^2 - 1)^2 + (y - x)^2`, minimizers `(1, 1)` and `(-1, -1)`.
struct Poly4;

impl Partials2 for Poly4 {
    fn partial(&self, x: f64, y: f64, a: usize, b: usize) -> f64 {
        match (a, b) {
            (0, 0) => (x * x - 1.0).powi(2) + (y - x).powi(2),
            (1, 0) => 4.0 * x.powi(3) - 2.0 * x - 2.0 * y,
            (0, 1) => 2.0 * (y - x),
            (2, 0) => 12.0 * x * x - 2.0,
            (1, 1) => -2.0,
            (0, 2) => 2.0,
            (3, 0) => 24.0 * x,
            (4, 0) => 24.0,
            _ => 0.0,
        }
    }
}

fn quadratic_problem(name: &'static str, diag: Vec<f64>) -> Result<ProblemSpec, HarnessError> {
    let n = diag.len();
    let lmax = diag.iter().copied().fold(0.0, f64::max);
    ProblemSpec::new(
        name,
        Arc::new(DiagonalQuadratic { diag }),
        Vector::from_element(n, 1.0),
        0.0,
        vec![lmax, 0.0, 0.0],
    )
}

fn two_d_problem<P: Partials2 + 'static>(
    name: &'static str,
    p: P,
    x0: [f64; 2],
    f_low: f64,
) -> Result<ProblemSpec, HarnessError> {
    let obj: Arc<dyn Objective> = Arc::new(TwoD(p));
    let lipschitz = estimated_lipschitz(obj.as_ref());
    ProblemSpec::new(name, obj, Vector::from_vec(x0.to_vec()), f_low, lipschitz)
}

/// The built-in problems:
///
/// * `quadratic2`: `0.5 x^T diag(1, 10) x` from `(1, 1)`;
/// * `quadratic10`: `0.5 x^T diag(1, ..., 10) x` from the all-ones point;
/// * `rosenbrock`: from `(-1.2, 1)`, minimum 0 at `(1, 1)`;
/// * `saddle`: `x^2/2 - y^2/2 + y^4/4` from `(1, 0)`, which leads a
///   first-order method straight to the saddle at the origin;
/// * `poly4`: `(x^2 - 1)^2 + (y - x)^2` from `(0.5, -1)`, minimum 0.
pub fn problem_suite() -> Vec<ProblemSpec> {
    let built = [
        quadratic_problem("quadratic2", vec![1.0, 10.0]),
        quadratic_problem("quadratic10", (1..=10).map(f64::from).collect()),
        two_d_problem("rosenbrock", Rosenbrock, [-1.2, 1.0], 0.0),
        two_d_problem("saddle", SaddleQuartic, [1.0, 0.0], -0.25),
        two_d_problem("poly4", Poly4, [0.5, -1.0], 0.0),
    ];
    built
        .into_iter()
        .map(|p| p.expect("built-in problems have consistent derivatives"))
        .collect()
}

pub fn problem_names() -> Vec<&'static str> {
    problem_suite().iter().map(|p| p.name).collect()
}

pub fn find_problem(name: &str) -> Result<ProblemSpec, HarnessError> {
    problem_suite()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| HarnessError::UnknownProblem(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dvector, SymmetricEigen};

    #[test]
    fn suite_contents() {
        let names = problem_names();
        assert_eq!(
            names,
            vec!["quadratic2", "quadratic10", "rosenbrock", "saddle", "poly4"]
        );
        for p in problem_suite() {
            assert!(p.objective.value(&p.x0) >= p.f_low);
            assert_eq!(p.lipschitz.len(), 3);
        }
    }

    #[test]
    fn quadratic_constants_are_closed_form() {
        let p = find_problem("quadratic2").unwrap();
        assert_eq!(p.lipschitz, vec![10.0, 0.0, 0.0]);
        assert_eq!(p.f_low, 0.0);
        let c = p.constants(2);
        assert_eq!(c.f0, 5.5);
        assert_relative_eq!(c.deriv_norms_x0[0], 101f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(c.deriv_norms_x0[1], 10.0, epsilon = 1e-12);
    }

    #[test]
    fn rosenbrock_minimum() {
        let p = find_problem("rosenbrock").unwrap();
        let xs = dvector![1.0, 1.0];
        assert_eq!(p.objective.value(&xs), 0.0);
        assert_eq!(p.objective.derivative(&xs, 1).as_vector(), dvector![0.0, 0.0]);
        assert_eq!(p.f_low, 0.0);
        // f_xxxx = 2400 is the largest fourth derivative.
        assert_relative_eq!(p.lipschitz[2], 2400.0, epsilon = 1e-9);
    }

    #[test]
    fn saddle_has_negative_curvature_at_origin() {
        let p = find_problem("saddle").unwrap();
        let h = p.objective.derivative(&dvector![0.0, 0.0], 2).as_matrix();
        let eig = SymmetricEigen::new(h);
        let lmin = eig.eigenvalues.min();
        assert_eq!(lmin, -1.0);
        assert_eq!(p.objective.value(&dvector![0.0, 1.0]), p.f_low);
        assert_eq!(
            p.objective.derivative(&dvector![0.0, 0.0], 1).as_vector(),
            dvector![0.0, 0.0]
        );
    }

    #[test]
    fn poly4_minimizers() {
        let p = find_problem("poly4").unwrap();
        for xs in [dvector![1.0, 1.0], dvector![-1.0, -1.0]] {
            assert_eq!(p.objective.value(&xs), 0.0);
            assert_eq!(p.objective.derivative(&xs, 1).as_vector(), dvector![0.0, 0.0]);
        }
    }

    #[test]
    fn inconsistent_derivatives_are_rejected() {
        struct Wrong;
        impl Objective for Wrong {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, x: &Vector) -> f64 {
                x[0] * x[0]
            }
            fn derivative(&self, x: &Vector, order: usize) -> DerivTensor {
                DerivTensor::from_fn(order, 1, |_| if order == 1 { 3.0 * x[0] } else { 0.0 })
            }
        }
        let r = ProblemSpec::new("wrong", Arc::new(Wrong), dvector![1.0], 0.0, vec![2.0, 0.0, 0.0]);
        assert!(matches!(r, Err(HarnessError::InconsistentDerivative { order: 1, .. })));
    }

    #[test]
    fn unknown_problem() {
        assert!(matches!(find_problem("nope"), Err(HarnessError::UnknownProblem(_))));
    }
}
