//! Ball-constrained maximization of Taylor decrements.
//!
//! * order 1: closed form, `d = -delta g / |g|`;
//! * order 2: exact trust-region subproblem via eigendecomposition and a
//!   safeguarded Newton iteration on the secular equation;
//! * order >= 3: multi-start projected gradient ascent. The achieved fraction
//!   `sigma` of the true maximum is *declared* by the caller, not certified.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{TaylorModel, Vector};

/// Number of starting points for the high-order multi-start ascent.
pub const DEFAULT_STARTS: usize = 32;
/// Iteration cap for projected-gradient improvement.
pub const MAX_ASCENT_ITERATIONS: usize = 200;
/// Iteration cap per start in the high-order multi-start search.
pub const MULTISTART_ITERATIONS: usize = 500;

const START_SEED: u64 = 0x0dd5_7a27;

/// A displacement inside a ball together with the decrement it achieves.
#[derive(Debug, Clone, PartialEq)]
pub struct Displacement {
    pub d: Vector,
    /// `model.decrement_order(j, d)`, as computed.
    pub decrement_value: f64,
    /// Radius of the ball the displacement was computed in.
    pub radius_bound: f64,
    /// Fraction of the maximum the displacement is claimed to achieve.
    pub sigma_claimed: f64,
}

impl Displacement {
    pub fn norm(&self) -> f64 {
        self.d.norm()
    }

    fn zero(n: usize, radius: f64, sigma: f64) -> Self {
        Self {
            d: Vector::zeros(n),
            decrement_value: 0.0,
            radius_bound: radius,
            sigma_claimed: sigma,
        }
    }
}

fn project(d: Vector, radius: f64) -> Vector {
    let n = d.norm();
    if n > radius {
        d * (radius / n)
    } else {
        d
    }
}

/// Finds `d` with `|d| <= delta` approximately maximizing the order-`j`
/// decrement of `model`.
pub fn maximize_decrement(model: &TaylorModel, j: usize, delta: f64, sigma: f64) -> Displacement {
    assert!(j >= 1 && j <= model.degree(), "order {j} outside the model degree");
    assert!(delta > 0.0, "radius must be positive");
    assert!(sigma > 0.0 && sigma <= 1.0, "sigma must lie in (0, 1]");
    let d = match j {
        1 => linear_maximizer(model, delta),
        2 => quadratic_maximizer(model, delta),
        _ => multistart_maximizer(model, j, delta),
    };
    finish(model, j, d, delta, sigma)
}

/// Improves `start` (typically the optimality displacement) inside the larger
/// ball of radius `radius`; the returned decrement is never below the start's.
pub fn compute_step(model: &TaylorModel, j: usize, start: &Displacement, radius: f64) -> Displacement {
    assert!(radius > 0.0, "trust-region radius must be positive");
    let start_value = model.decrement_order(j, &start.d);
    let mut best = Displacement {
        d: start.d.clone(),
        decrement_value: start_value,
        radius_bound: radius,
        sigma_claimed: start.sigma_claimed,
    };
    let (d, v) = ascend(model, j, start.d.clone(), radius, MAX_ASCENT_ITERATIONS);
    if v > best.decrement_value {
        best.d = d;
        best.decrement_value = v;
    }
    if j <= 2 {
        let g = global_step(model, j, radius);
        if g.decrement_value > best.decrement_value {
            best.d = g.d;
            best.decrement_value = g.decrement_value;
        }
    }
    debug_assert!(best.decrement_value >= start_value);
    debug_assert!(best.d.norm() <= radius * (1.0 + 1e-12));
    best
}

/// Approximate global maximizer of the order-`j` decrement over `|s| <= radius`
/// (exact for `j <= 2`).
pub fn global_step(model: &TaylorModel, j: usize, radius: f64) -> Displacement {
    maximize_decrement(model, j, radius, 1.0)
}

fn finish(model: &TaylorModel, j: usize, d: Vector, radius: f64, sigma: f64) -> Displacement {
    let d = project(d, radius);
    let value = model.decrement_order(j, &d);
    if value > 0.0 && value.is_finite() {
        Displacement {
            d,
            decrement_value: value,
            radius_bound: radius,
            sigma_claimed: sigma,
        }
    } else {
        Displacement::zero(model.dim(), radius, sigma)
    }
}

fn linear_maximizer(model: &TaylorModel, delta: f64) -> Vector {
    let g = model.tensor(1).as_vector();
    let gn = g.norm();
    if gn == 0.0 {
        return Vector::zeros(model.dim());
    }
    g * (-delta / gn)
}

fn quadratic_maximizer(model: &TaylorModel, delta: f64) -> Vector {
    // decrement = -(g.d + d^T C d) = -(g.d + 0.5 d^T B d) with B = 2C.
    let g = model.tensor(1).as_vector();
    let b = model.tensor(2).as_matrix() * 2.0;
    let b = (&b + b.transpose()) * 0.5;
    solve_trust_region(&g, &b, delta)
}

/// Global minimizer of `g.d + 0.5 d^T B d` over `|d| <= radius`, `B` symmetric.
pub fn solve_trust_region(g: &Vector, b: &DMatrix<f64>, radius: f64) -> Vector {
    let n = g.len();
    let eig = b.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[c]));
    let lam: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let q: Vec<Vector> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    let gh: Vec<f64> = q.iter().map(|qi| qi.dot(g)).collect();

    let gnorm = g.norm();
    let scale = lam
        .iter()
        .fold(gnorm / radius, |m, l| m.max(l.abs()))
        .max(f64::MIN_POSITIVE);
    let lam_tol = 1e-12 * scale;
    let lam1 = lam[0];

    let assemble = |mu: f64, skip_min_space: bool| -> Vector {
        let mut d = Vector::zeros(n);
        for i in 0..n {
            if skip_min_space && lam[i] - lam1 <= lam_tol {
                continue;
            }
            let den = lam[i] + mu;
            if den > 0.0 {
                d -= &q[i] * (gh[i] / den);
            }
        }
        d
    };
    let norm_at = |mu: f64| -> f64 {
        gh.iter()
            .zip(&lam)
            .map(|(gi, li)| (gi / (li + mu)).powi(2))
            .sum::<f64>()
            .sqrt()
    };

    if lam1 > lam_tol {
        let d = assemble(0.0, false);
        if d.norm() <= radius {
            return d;
        }
    }

    let mu_lo = (-lam1).max(0.0);
    let g_min_sq: f64 = (0..n)
        .filter(|&i| lam[i] - lam1 <= lam_tol)
        .map(|i| gh[i] * gh[i])
        .sum();
    let g_zero_tol = 1e-14 * gnorm.max(scale * radius);
    if g_min_sq.sqrt() <= g_zero_tol {
        // Hard case: the gradient has no component along the leftmost eigenspace.
        let rest = assemble(mu_lo, true);
        let rn = rest.norm();
        if rn <= radius {
            if lam1 >= -lam_tol {
                return rest;
            }
            let tau = (radius * radius - rn * rn).max(0.0).sqrt();
            return rest + &q[0] * tau;
        }
    }

    // Secular equation 1/|d(mu)| = 1/radius on (mu_lo, mu_hi].
    let mut lo = mu_lo;
    let mut hi = mu_lo + gnorm / radius + lam_tol;
    while norm_at(hi) > radius {
        hi = 2.0 * hi + f64::MIN_POSITIVE;
    }
    let mut mu = hi;
    for _ in 0..200 {
        let nrm = norm_at(mu);
        if (nrm - radius).abs() <= 1e-14 * radius {
            break;
        }
        if nrm > radius {
            lo = mu;
        } else {
            hi = mu;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.max(1e-300) {
            mu = hi;
            break;
        }
        let psi = 1.0 / nrm - 1.0 / radius;
        let dnorm: f64 = gh
            .iter()
            .zip(&lam)
            .map(|(gi, li)| gi * gi / (li + mu).powi(3))
            .sum::<f64>()
            / nrm.powi(3);
        let newton = mu - psi / dnorm;
        mu = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let d = assemble(mu, false);
    project(d, radius)
}

/// Monotone projected gradient ascent on the order-`j` decrement.
fn ascend(model: &TaylorModel, j: usize, start: Vector, radius: f64, max_iter: usize) -> (Vector, f64) {
    let mut x = project(start, radius);
    let mut fx = model.decrement_order(j, &x);
    let mut step: Option<f64> = None;
    for _ in 0..max_iter {
        let mut g = model.decrement_gradient(j, &x);
        // On the boundary with an outward gradient, ascend along the sphere
        // instead: the projected full gradient barely moves tangentially.
        let xn2 = x.norm_squared();
        if xn2 >= radius * radius * (1.0 - 1e-12) && g.dot(&x) > 0.0 {
            g -= &x * (g.dot(&x) / xn2);
        }
        let gn = g.norm();
        if gn == 0.0 || !gn.is_finite() {
            break;
        }
        let mut t = step.unwrap_or(2.0 * radius / gn);
        let mut accepted = None;
        for _ in 0..60 {
            let cand = project(&x + &g * t, radius);
            let fc = model.decrement_order(j, &cand);
            let lin = g.dot(&(&cand - &x));
            if fc > fx && fc >= fx + 1e-4 * lin {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = accepted else { break };
        let moved = (&cand - &x).norm();
        x = cand;
        fx = fc;
        step = Some(2.0 * t);
        if moved <= 1e-13 * radius {
            break;
        }
    }
    (x, fx)
}

fn multistart_maximizer(model: &TaylorModel, j: usize, delta: f64) -> Vector {
    let n = model.dim();
    let mut starts: Vec<Vector> = Vec::with_capacity(DEFAULT_STARTS);
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut e = Vector::zeros(n);
            e[i] = sign * delta;
            starts.push(e);
        }
    }
    starts.push(quadratic_maximizer(model, delta));
    starts.push(linear_maximizer(model, delta));
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    while starts.len() < DEFAULT_STARTS {
        let v = Vector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
        let vn = v.norm();
        if vn > 1e-3 {
            starts.push(v * (delta / vn));
        }
    }
    let mut best = Vector::zeros(n);
    let mut best_value = 0.0;
    for s in starts {
        let (d, v) = ascend(model, j, s, delta, MULTISTART_ITERATIONS);
        if v > best_value {
            best = d;
            best_value = v;
        }
    }
    best
}
