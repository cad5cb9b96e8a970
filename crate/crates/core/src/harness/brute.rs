//! Independent reference values of the optimality measure
//! `phi_j^delta(x) = max_{|d| <= delta} -sum_{l<=j} grad^l f(x)[d]^l / l!`.
//!
//! Order one has the closed form `|g| delta`. Higher orders in dimension at
//! most three use a dense polar or spherical grid followed by a compass-search
//! polish; order two in larger dimensions uses a Cholesky-based secular
//! equation solve. None of these share code with the solver's inner
//! maximizer beyond model evaluation.

use nalgebra::{Cholesky, DMatrix};

use crate::model::{TaylorModel, Vector};

use super::problems::ProblemSpec;
use super::HarnessError;

/// Largest dimension handled by the grid search.
pub const GRID_MAX_DIM: usize = 3;

/// Minimum number of grid samples.
pub const GRID_SAMPLES: usize = 100_000;

/// Exact Taylor model of degree `j` of the problem at `x`.
pub fn exact_model(problem: &ProblemSpec, x: &Vector, j: usize) -> TaylorModel {
    let derivs: Vec<_> = (1..=j).map(|l| problem.objective.derivative(x, l)).collect();
    TaylorModel::from_derivatives(x.clone(), &derivs, 1.0)
}

/// `phi_j^delta(x)` for the exact derivatives of `problem`.
pub fn brute_force_phi(problem: &ProblemSpec, x: &Vector, j: usize, delta: f64) -> Result<f64, HarnessError> {
    if x.len() != problem.dim() {
        return Err(HarnessError::Dimension {
            expected: problem.dim(),
            got: x.len(),
        });
    }
    brute_force_model_phi(&exact_model(problem, x, j), j, delta)
}

/// Largest order-`j` decrement of `model` over the ball of radius `delta`.
pub fn brute_force_model_phi(model: &TaylorModel, j: usize, delta: f64) -> Result<f64, HarnessError> {
    assert!(j >= 1 && j <= model.degree(), "order {j} outside the model degree");
    assert!(delta >= 0.0, "radius must be non-negative");
    let n = model.dim();
    if delta == 0.0 {
        return Ok(0.0);
    }
    if j == 1 {
        return Ok(model.tensor(1).as_vector().norm() * delta);
    }
    if n <= GRID_MAX_DIM {
        return Ok(grid_phi(model, j, delta));
    }
    if j == 2 {
        let g = model.tensor(1).as_vector();
        let b = model.tensor(2).as_matrix() * 2.0;
        let d = more_sorensen(&g, &b, delta);
        return Ok(model.decrement_order(2, &d).max(0.0));
    }
    Err(HarnessError::DimensionTooLarge { dim: n, order: j })
}

fn grid_points(n: usize, delta: f64) -> Vec<Vector> {
    let mut pts = Vec::with_capacity(GRID_SAMPLES + 1);
    pts.push(Vector::zeros(n));
    match n {
        1 => {
            let m = GRID_SAMPLES / 2;
            for i in 1..=m {
                let r = delta * i as f64 / m as f64;
                pts.push(Vector::from_vec(vec![r]));
                pts.push(Vector::from_vec(vec![-r]));
            }
        }
        2 => {
            let (nr, na) = (250, 400);
            for i in 1..=nr {
                let r = delta * i as f64 / nr as f64;
                for a in 0..na {
                    let t = std::f64::consts::TAU * a as f64 / na as f64;
                    pts.push(Vector::from_vec(vec![r * t.cos(), r * t.sin()]));
                }
            }
        }
        _ => {
            // Fibonacci sphere directions times uniform radii.
            let (nr, nd) = (50, 2000);
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            let dirs: Vec<[f64; 3]> = (0..nd)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / nd as f64;
                    let rho = (1.0 - z * z).sqrt();
                    let t = golden * i as f64;
                    [rho * t.cos(), rho * t.sin(), z]
                })
                .collect();
            for i in 1..=nr {
                let r = delta * i as f64 / nr as f64;
                for d in &dirs {
                    pts.push(Vector::from_vec(vec![r * d[0], r * d[1], r * d[2]]));
                }
            }
        }
    }
    pts
}

fn project(mut v: Vector, delta: f64) -> Vector {
    let norm = v.norm();
    if norm > delta {
        v *= delta / norm;
    }
    v
}

/// Compass search inside the ball. Besides the coordinate directions, points
/// on the boundary also try small rotations so that they can slide along it.
fn polish(model: &TaylorModel, j: usize, delta: f64, start: Vector) -> (Vector, f64) {
    let n = start.len();
    let mut x = start;
    let mut best = model.decrement_order(j, &x);
    let mut h = 0.05 * delta;
    while h > 1e-13 * delta {
        let mut improved = false;
        for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] += sign * h;
                let y = project(y, delta);
                let v = model.decrement_order(j, &y);
                if v > best {
                    best = v;
                    x = y;
                    improved = true;
                }
            }
        }
        let xn = x.norm();
        if xn > 0.0 {
            // Push outward along the ray and rotate within each coordinate plane.
            let mut candidates = vec![project(&x * ((xn + h) / xn), delta)];
            for a in 0..n {
                for b in (a + 1)..n {
                    for sign in [1.0, -1.0] {
                        let t = sign * h / xn.max(h);
                        let mut y = x.clone();
                        y[a] = x[a] * t.cos() - x[b] * t.sin();
                        y[b] = x[a] * t.sin() + x[b] * t.cos();
                        candidates.push(y);
                    }
                }
            }
            for y in candidates {
                let v = model.decrement_order(j, &y);
                if v > best {
                    best = v;
                    x = y;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    (x, best)
}

fn grid_phi(model: &TaylorModel, j: usize, delta: f64) -> f64 {
    let pts = grid_points(model.dim(), delta);
    let mut scored: Vec<(f64, usize)> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| (model.decrement_order(j, p), i))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut best = scored[0].0.max(0.0);
    for &(_, i) in scored.iter().take(8) {
        let (_, v) = polish(model, j, delta, pts[i].clone());
        best = best.max(v);
    }
    best
}

/// Global minimizer of `g^T d + d^T B d / 2` over `|d| <= radius` by the
/// Moré–Sorensen characterization: `(B + lambda I) d = -g`, `B + lambda I`
/// positive semidefinite, `lambda (|d| - radius) = 0`. The multiplier is
/// located by bisection on Cholesky factorizations; the hard case is
/// completed along an approximate null vector from inverse iteration.
pub fn more_sorensen(g: &Vector, b: &DMatrix<f64>, radius: f64) -> Vector {
    let n = g.len();
    assert!(radius > 0.0);
    let shifted = |lambda: f64| -> Option<Cholesky<f64, nalgebra::Dyn>> {
        let m = b + DMatrix::identity(n, n) * lambda;
        Cholesky::new(m)
    };
    let solve = |lambda: f64| -> Option<Vector> { shifted(lambda).map(|c| -c.solve(g)) };

    if let Some(d) = solve(0.0) {
        if d.norm() <= radius {
            return d;
        }
    }
    // Gershgorin bound on the spectrum gives a bracket.
    let row_max = (0..n)
        .map(|i| b.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut hi = row_max + g.norm() / radius + 1.0;
    let mut lo = 0.0f64;
    // Smallest shift with a Cholesky factorization.
    let mut pd_lo = -row_max.max(0.0) - 1.0;
    let mut pd_hi = hi;
    for _ in 0..200 {
        let mid = 0.5 * (pd_lo + pd_hi);
        if shifted(mid).is_some() {
            pd_hi = mid;
        } else {
            pd_lo = mid;
        }
    }
    lo = lo.max(pd_hi);
    let mut d_hi = solve(hi).unwrap_or_else(|| Vector::zeros(n));
    let d_lo = solve(lo);
    if let Some(d) = &d_lo {
        if d.norm() < radius {
            // Hard case: the secular equation has no root above the shift.
            let lambda = lo;
            let m = b + DMatrix::identity(n, n) * lambda;
            let mut z = Vector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64);
            z /= z.norm();
            let reg = m.clone() + DMatrix::identity(n, n) * (1e-10 * (1.0 + row_max));
            if let Some(c) = Cholesky::new(reg) {
                for _ in 0..50 {
                    z = c.solve(&z);
                    z /= z.norm();
                }
            }
            let dz = d.dot(&z);
            let gap = radius * radius - d.norm_squared();
            let tau = -dz + (dz * dz + gap).sqrt();
            let cand = [d + &z * tau, d - &z * (dz + (dz * dz + gap).sqrt())];
            let q = |s: &Vector| g.dot(s) + 0.5 * s.dot(&(b * s));
            return if q(&cand[0]) <= q(&cand[1]) {
                cand[0].clone()
            } else {
                cand[1].clone()
            };
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        match solve(mid) {
            Some(d) if d.norm() > radius => lo = mid,
            Some(d) => {
                hi = mid;
                d_hi = d;
            }
            None => lo = mid,
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    // Scale onto the boundary to absorb the bisection residual.
    let norm = d_hi.norm();
    if norm > 0.0 {
        d_hi *= radius / norm;
    }
    d_hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DerivTensor;
    use crate::subproblem::solve_trust_region;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn coefficient_model(g: Vector, c: DMatrix<f64>) -> TaylorModel {
        let n = g.len();
        TaylorModel::from_coefficients(
            Vector::zeros(n),
            vec![DerivTensor::from_vector(&g), DerivTensor::from_matrix(&c)],
            1.0,
        )
    }

    #[test]
    fn first_order_example() {
        let m = coefficient_model(dvector![3.0, 4.0], DMatrix::zeros(2, 2));
        assert_eq!(brute_force_model_phi(&m, 1, 0.5).unwrap(), 2.5);
    }

    #[test]
    fn second_order_example() {
        let m = coefficient_model(dvector![0.0, 0.0], dmatrix![-2.0, 0.0; 0.0, 1.0]);
        assert_relative_eq!(brute_force_model_phi(&m, 2, 1.0).unwrap(), 2.0, max_relative = 1e-10);
    }

    #[test]
    fn zero_radius_gives_zero() {
        let m = coefficient_model(dvector![1.0, 1.0], dmatrix![-2.0, 0.0; 0.0, 1.0]);
        assert_eq!(brute_force_model_phi(&m, 2, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn grid_matches_closed_form_for_convex_interior_solution() {
        // phi = g^T B^-1 g / 2 when the Newton step is interior.
        let g = dvector![0.3, -0.2];
        let c = dmatrix![1.0, 0.2; 0.2, 2.0];
        let m = coefficient_model(g.clone(), c.clone());
        let b = &c * 2.0;
        let expected = 0.5 * g.dot(&b.clone().cholesky().unwrap().solve(&g));
        assert_relative_eq!(
            brute_force_model_phi(&m, 2, 1.0).unwrap(),
            expected,
            max_relative = 1e-9
        );
    }

    #[test]
    fn grid_matches_eigen_solver_in_3d() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let g = Vector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            let c = (&a + a.transpose()) * 0.5;
            let m = coefficient_model(g.clone(), c.clone());
            let d = solve_trust_region(&g, &(&c * 2.0), 0.8);
            let reference = m.decrement_order(2, &d);
            let brute = brute_force_model_phi(&m, 2, 0.8).unwrap();
            assert_relative_eq!(brute, reference, max_relative = 1e-6);
        }
    }

    #[test]
    fn more_sorensen_matches_eigen_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [4, 6, 10] {
            for _ in 0..10 {
                let g = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
                let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                let b = &a + a.transpose();
                let radius = rng.random_range(0.1..2.0);
                let d_ms = more_sorensen(&g, &b, radius);
                let d_eig = solve_trust_region(&g, &b, radius);
                let q = |s: &Vector| g.dot(s) + 0.5 * s.dot(&(&b * s));
                assert!(d_ms.norm() <= radius * (1.0 + 1e-12));
                assert_relative_eq!(q(&d_ms), q(&d_eig), max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn more_sorensen_hard_case() {
        let g = dvector![0.0, 1.0, 0.0, 0.0];
        let b = DMatrix::from_diagonal(&dvector![-2.0, 4.0, 1.0, 3.0]);
        let d = more_sorensen(&g, &b, 1.0);
        let q = |s: &Vector| g.dot(s) + 0.5 * s.dot(&(&b * s));
        // lambda = 2, d_2 = -1/6, remaining length along e_1.
        let expected = -1.0 / 6.0 + 0.5 * (-2.0 * (1.0 - 1.0 / 36.0) + 4.0 / 36.0);
        assert_relative_eq!(q(&d), expected, max_relative = 1e-8);
        assert_relative_eq!(d.norm(), 1.0, max_relative = 1e-10);
    }

    #[test]
    fn high_order_in_large_dimension_is_rejected() {
        let n = 4;
        let m = TaylorModel::from_coefficients(
            Vector::zeros(n),
            vec![
                DerivTensor::zeros(1, n),
                DerivTensor::zeros(2, n),
                DerivTensor::zeros(3, n),
            ],
            1.0,
        );
        assert!(matches!(
            brute_force_model_phi(&m, 3, 1.0),
            Err(HarnessError::DimensionTooLarge { dim: 4, order: 3 })
        ));
    }

    #[test]
    fn problem_wrapper_uses_taylor_scaling() {
        // f = 0.5 x^T diag(1, 10) x at (1, 1): g = (1, 10), Hessian diag(1, 10).
        let p = super::super::problems::find_problem("quadratic2").unwrap();
        let x = dvector![1.0, 1.0];
        assert_relative_eq!(
            brute_force_phi(&p, &x, 1, 0.5).unwrap(),
            101f64.sqrt() * 0.5,
            epsilon = 1e-14
        );
        let d = solve_trust_region(&dvector![1.0, 10.0], &dmatrix![1.0, 0.0; 0.0, 10.0], 0.5);
        let expected = -(d[0] + 10.0 * d[1]) - 0.5 * (d[0] * d[0] + 10.0 * d[1] * d[1]);
        assert_relative_eq!(brute_force_phi(&p, &x, 2, 0.5).unwrap(), expected, max_relative = 1e-8);
    }
}
