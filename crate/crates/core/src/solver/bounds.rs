//! Worst-case evaluation bounds instantiated with problem constants.
//!
//! Two families of numbers are produced. The *chain* values follow the
//! derivation step by step (minimum model decrease `Delta_f`, successful
//! iteration bound, total iteration bound, tightening bound) and are the
//! tightest bounds the analysis supports. The *formula* values are the closed
//! forms `kappa * (f0 - f_low) / max[theta_f, theta_d eps, eps^(q+1)] + ...`,
//! which dominate the chain values.

use thiserror::Error;

use crate::model::factorial;
use crate::oracle::NoiseProfile;

use super::SolverConfig;

/// Problem-dependent constants entering the bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConstants {
    /// `f(x0)`.
    pub f0: f64,
    /// Lower bound on the objective.
    pub f_low: f64,
    /// Lipschitz constants `L_{f,j}` of the `j`-th derivative, `j = 1..=q`.
    pub lipschitz: Vec<f64>,
    /// `|grad^i f(x0)|` in the induced norm, `i = 1..=q`.
    pub deriv_norms_x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("need {needed} {what}, got {got}")]
    MissingConstants {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("invalid constant {0}")]
    InvalidConstant(&'static str),
}

/// Instantiated bounds and the constants they are built from.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRecord {
    pub kappa_r: f64,
    pub kappa_delta: f64,
    /// Guaranteed true decrease on every successful iteration.
    pub delta_f: f64,
    /// Bound on the number of successful iterations.
    pub successful_iterations: f64,
    /// Bound on the total number of iterations.
    pub n_it: f64,
    pub kappa_acc: f64,
    /// Bound on the number of accuracy tightenings.
    pub i_zeta_max: f64,
    /// `2 n_it`.
    pub f_evals: f64,
    /// `successful_iterations + i_zeta_max + 1`.
    pub deriv_evals: f64,
    /// `max[theta_f, theta_d eps_min, eps_min^(q+1)]`.
    pub denominator: f64,
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub kappa_c: f64,
    pub kappa_d: f64,
    pub kappa_e: f64,
    pub kappa_s: f64,
    /// Closed-form bound on function evaluations.
    pub f_evals_formula: f64,
    /// Closed-form bound on derivative evaluations.
    pub deriv_evals_formula: f64,
}

/// Instantiates the evaluation bounds for `config` on a problem with
/// constants `pc` observed through noise floors `noise`.
///
/// Interpretations: the initial optimality radii are all `min(Delta0, theta)`
/// and the aggregate Lipschitz constant is `max_j L_{f,j}`. The successful
/// iteration constant `kappa_s` divides by the *smallest* of the three
/// decrease coefficients so that the closed form dominates the chain bound.
pub fn theoretical_bounds(
    config: &SolverConfig,
    pc: &ProblemConstants,
    noise: NoiseProfile,
) -> Result<BoundRecord, BoundsError> {
    let q = config.q;
    if pc.lipschitz.len() < q {
        return Err(BoundsError::MissingConstants {
            what: "Lipschitz constants",
            needed: q,
            got: pc.lipschitz.len(),
        });
    }
    if pc.deriv_norms_x0.len() < q {
        return Err(BoundsError::MissingConstants {
            what: "derivative norms at x0",
            needed: q,
            got: pc.deriv_norms_x0.len(),
        });
    }
    if !(pc.f0.is_finite() && pc.f_low.is_finite() && pc.f0 >= pc.f_low) {
        return Err(BoundsError::InvalidConstant("f0 >= f_low"));
    }
    if pc.lipschitz[..q]
        .iter()
        .chain(&pc.deriv_norms_x0[..q])
        .any(|v| !(v.is_finite() && *v >= 0.0))
    {
        return Err(BoundsError::InvalidConstant("Lipschitz constants and derivative norms"));
    }

    let c = config;
    let eps = c.eps_min();
    let omega = c.omega;
    let sigma = c.sigma;
    let qf = factorial(q);
    let qp1 = q as i32 + 1;

    let l_f = pc.lipschitz[..q].iter().copied().fold(0.0, f64::max);
    let g0 = pc.deriv_norms_x0[..q].iter().copied().fold(0.0, f64::max);
    let delta00 = c.delta0.min(c.theta);
    let kappa_r = c.gamma1 * (1.0 - c.eta2) / (4.0 * l_f.max(1.0))
        * f64::min(
            c.theta,
            c.delta0 * delta00.powi(q as i32) / (2.0 * q as f64 * (g0 + c.kappa_zeta)),
        );
    let kappa_delta = kappa_r / (1.0 + omega);
    let sk = sigma * kappa_delta;

    let eta_gap = c.eta1 - 2.0 * omega;
    let delta_f = eta_gap
        * f64::max(
            f64::max(noise.theta_d * sk * eps / omega, sk.powi(qp1) * eps.powi(qp1) / qf),
            noise.theta_f / omega,
        );
    let gap = pc.f0 - pc.f_low;
    let successful_iterations = gap / delta_f;
    let log_g2 = c.gamma2.ln().abs();
    let ratio = 1.0 + c.gamma3.ln() / log_g2;
    let n_it = successful_iterations * ratio + (sk * eps / c.delta0).ln().abs() / log_g2;

    let kappa_acc = sigma * omega * sk.powi(q as i32) / (8.0 * (1.0 + omega) * c.delta_max.powi(q as i32).max(1.0));
    let log_gz = c.gamma_zeta.ln();
    let accuracy_floor = (qp1 as f64) * eps.ln() + (kappa_acc / c.zeta_d0).ln();
    let exponent = if noise.theta_d > 0.0 {
        (noise.theta_d / c.zeta_d0).ln().max(accuracy_floor)
    } else {
        accuracy_floor
    };
    // The small allowance keeps exact integer ratios from rounding down.
    let i_zeta_max = (exponent / log_gz + 1e-9).floor().max(0.0);

    let denominator = noise.theta_f.max(noise.theta_d * eps).max(eps.powi(qp1));
    let coef_min = f64::min(f64::min(sk / omega, sk.powi(qp1) / qf), 1.0 / omega);
    let kappa_s = 1.0 / (eta_gap * coef_min);
    let kappa_a = 2.0 * kappa_s * ratio;
    let kappa_b = 2.0 / log_g2;
    let kappa_c = 2.0 / log_g2 * (sk / c.delta0).ln().abs();
    let kappa_d = (qp1 as f64) / log_gz.abs();
    let noise_term = if noise.theta_d > 0.0 {
        (noise.theta_d / c.zeta_d0).ln().abs()
    } else {
        0.0
    };
    let kappa_e = ((kappa_acc / c.zeta_d0).ln().abs() + noise_term) / log_gz.abs() + 2.0;
    let log_eps = eps.ln().abs();

    Ok(BoundRecord {
        kappa_r,
        kappa_delta,
        delta_f,
        successful_iterations,
        n_it,
        kappa_acc,
        i_zeta_max,
        f_evals: 2.0 * n_it,
        deriv_evals: successful_iterations + i_zeta_max + 1.0,
        denominator,
        kappa_a,
        kappa_b,
        kappa_c,
        kappa_d,
        kappa_e,
        kappa_s,
        f_evals_formula: kappa_a * gap / denominator + kappa_b * log_eps + kappa_c,
        deriv_evals_formula: kappa_s * gap / denominator + kappa_d * log_eps + kappa_e,
    })
}
