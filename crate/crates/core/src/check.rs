//! Accuracy adjudication for an inexact Taylor decrement.
//!
//! Given the current derivative accuracy `zeta`, decide whether a computed
//! decrement can be trusted relatively, is provably small in absolute terms,
//! needs tighter derivatives, or has hit the noise floor.

use crate::model::{factorial, sum_delta_powers};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccuracyStatus {
    Relative,
    Absolute,
    Insufficient,
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckResult {
    pub status: AccuracyStatus,
    /// `gamma_zeta * zeta` when insufficient, `zeta` otherwise.
    pub zeta_next: f64,
}

/// Constants fixed for a whole solver run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckConstants {
    /// Relative accuracy `omega in (0, 1)`.
    pub omega: f64,
    /// Tightening factor `gamma_zeta in (0, 1)`.
    pub gamma_zeta: f64,
    /// Derivative noise floor.
    pub theta_d: f64,
}

/// Adjudicates the decrement `dt` measured over a ball of radius `delta` with
/// a degree-`r` model whose derivatives are accurate to `zeta`.
///
/// Branches are tried in order:
/// 1. relative: `dt > 0` and `zeta * sum_{l<=r} delta^l/l! <= omega * dt`
/// 2. absolute: `zeta * sum_{l<=r} delta^l/l! <= omega * xi * delta^r / r!`
/// 3. insufficient: `gamma_zeta * zeta > theta_d`
/// 4. terminal otherwise.
pub fn check(delta: f64, dt: f64, zeta: f64, xi: f64, r: usize, c: &CheckConstants) -> CheckResult {
    assert!(delta > 0.0, "check: delta must be positive (got {delta})");
    assert!(zeta > 0.0, "check: zeta must be positive (got {zeta})");
    assert!(xi > 0.0, "check: xi must be positive (got {xi})");
    assert!(r >= 1, "check: degree must be at least one");
    assert!(dt >= 0.0, "check: decrement must be non-negative (got {dt})");
    assert!(c.omega > 0.0 && c.omega < 1.0, "check: omega must lie in (0, 1)");
    assert!(
        c.gamma_zeta > 0.0 && c.gamma_zeta < 1.0,
        "check: gamma_zeta must lie in (0, 1)"
    );
    assert!(c.theta_d >= 0.0, "check: theta_d must be non-negative");

    let error_bound = zeta * sum_delta_powers(r, delta);
    let status = if dt > 0.0 && error_bound <= c.omega * dt {
        AccuracyStatus::Relative
    } else if error_bound <= c.omega * xi * delta.powi(r as i32) / factorial(r) {
        AccuracyStatus::Absolute
    } else if c.gamma_zeta * zeta > c.theta_d {
        AccuracyStatus::Insufficient
    } else {
        AccuracyStatus::Terminal
    };
    let zeta_next = if status == AccuracyStatus::Insufficient {
        c.gamma_zeta * zeta
    } else {
        zeta
    };
    CheckResult { status, zeta_next }
}
