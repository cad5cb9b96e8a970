//! Explicit-dynamic-accuracy evaluation of a function and its derivatives.
//!
//! The caller states the absolute accuracy it needs *before* each evaluation.
//! A request at or above the intrinsic noise floor succeeds and the returned
//! value is guaranteed to be that accurate; a request below the floor is
//! refused with [`NoiseFloor`].

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{DerivTensor, Vector};

/// Exact value and derivative callables of a smooth objective.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &Vector) -> f64;

    /// The `order`-th derivative tensor `grad^order f(x)` (no factorial scaling).
    fn derivative(&self, x: &Vector, order: usize) -> DerivTensor;
}

/// Known absolute noise floors on function values and derivative tensors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseProfile {
    pub theta_f: f64,
    pub theta_d: f64,
}

impl NoiseProfile {
    pub const NONE: NoiseProfile = NoiseProfile {
        theta_f: 0.0,
        theta_d: 0.0,
    };

    pub fn new(theta_f: f64, theta_d: f64) -> Self {
        assert!(theta_f.is_finite() && theta_f >= 0.0, "theta_f must be finite and >= 0");
        assert!(theta_d.is_finite() && theta_d >= 0.0, "theta_d must be finite and >= 0");
        Self { theta_f, theta_d }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalCounters {
    pub f_evals: u64,
    /// One per call returning the full set of derivative tensors.
    pub deriv_evals: u64,
    pub accuracy_tightenings: u64,
}

impl std::ops::Sub for EvalCounters {
    type Output = EvalCounters;

    fn sub(self, rhs: Self) -> Self {
        EvalCounters {
            f_evals: self.f_evals - rhs.f_evals,
            deriv_evals: self.deriv_evals - rhs.deriv_evals,
            accuracy_tightenings: self.accuracy_tightenings - rhs.accuracy_tightenings,
        }
    }
}

/// The requested accuracy lies below the intrinsic noise level.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("requested accuracy {requested:e} is below the noise floor {floor:e}")]
pub struct NoiseFloor {
    pub requested: f64,
    pub floor: f64,
}

/// A successful evaluation together with the accuracy it is guaranteed to have.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated<T> {
    pub value: T,
    pub guaranteed_accuracy: f64,
}

pub type OracleOutcome<T> = Result<Evaluated<T>, NoiseFloor>;

/// Inexact oracle with requested absolute accuracies.
pub trait Oracle {
    fn dim(&self) -> usize;

    fn noise(&self) -> NoiseProfile;

    /// `fbar(x)` with `|fbar(x) - f(x)| <= zeta_f`.
    fn eval_f(&mut self, x: &Vector, zeta_f: f64) -> OracleOutcome<f64>;

    /// Derivative tensors of orders `1..=j`, each within `zeta_d` of the truth in
    /// the induced norm.
    fn eval_derivs(&mut self, x: &Vector, j: usize, zeta_d: f64) -> OracleOutcome<Vec<DerivTensor>>;

    fn counters(&self) -> EvalCounters;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Exact,
    Bounded,
    Quantized,
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown noise model `{0}` (expected exact, bounded or quantized)")]
pub struct UnknownNoiseKind(pub String);

impl FromStr for NoiseKind {
    type Err = UnknownNoiseKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(Self::Exact),
            "bounded" => Ok(Self::Bounded),
            "quantized" => Ok(Self::Quantized),
            other => Err(UnknownNoiseKind(other.to_string())),
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Exact => "exact",
            Self::Bounded => "bounded",
            Self::Quantized => "quantized",
        })
    }
}

/// Parameters for [`make_noise_model`]; fields irrelevant to a kind are ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// Floors for the bounded model.
    pub theta_f: f64,
    pub theta_d: f64,
    /// Largest perturbation magnitude used by the bounded model.
    pub cap: f64,
    /// Significand bits kept by the quantized model.
    pub bits: u32,
    /// Declared bound on `|f|` and on the Frobenius norms of the derivative
    /// tensors over the region of interest (quantized model).
    pub magnitude: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            theta_f: 0.0,
            theta_d: 0.0,
            cap: f64::INFINITY,
            bits: 53,
            magnitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Perturbation {
    Exact,
    Bounded { seed: u64, cap: f64 },
    Quantized { bits: u32 },
}

/// Oracle wrapping an exact [`Objective`] with one of the built-in noise models.
#[derive(Clone)]
pub struct NoisyOracle {
    objective: Arc<dyn Objective>,
    noise: NoiseProfile,
    perturbation: Perturbation,
    counters: EvalCounters,
}

impl fmt::Debug for NoisyOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NoisyOracle")
            .field("noise", &self.noise)
            .field("perturbation", &self.perturbation)
            .field("counters", &self.counters)
            .finish_non_exhaustive()
    }
}

/// Builds an oracle of the requested kind around `objective`.
///
/// * `exact`: zero floors, no perturbation.
/// * `bounded`: floors `params.theta_f/theta_d`; each answer is perturbed by
///   `min(zeta, cap) * u` with `u in [-1, 1]` drawn from `(seed, x, order)`.
///   Derivative perturbations are rank one, `m u w⊗...⊗w` with `|w| = 1`,
///   so their induced norm is exactly `m |u|`.
/// * `quantized`: values and tensor entries rounded to `params.bits`
///   significand bits; floors are `2^-bits * params.magnitude`.
pub fn make_noise_model(kind: NoiseKind, seed: u64, params: NoiseParams, objective: Arc<dyn Objective>) -> NoisyOracle {
    let (noise, perturbation) = match kind {
        NoiseKind::Exact => (NoiseProfile::NONE, Perturbation::Exact),
        NoiseKind::Bounded => (
            NoiseProfile::new(params.theta_f, params.theta_d),
            Perturbation::Bounded { seed, cap: params.cap },
        ),
        NoiseKind::Quantized => {
            let floor = 2f64.powi(-(params.bits as i32)) * params.magnitude;
            (
                NoiseProfile::new(floor, floor),
                Perturbation::Quantized { bits: params.bits },
            )
        }
    };
    NoisyOracle {
        objective,
        noise,
        perturbation,
        counters: EvalCounters::default(),
    }
}

impl NoisyOracle {
    pub fn objective(&self) -> &Arc<dyn Objective> {
        &self.objective
    }

    fn draw(&self, seed: u64, x: &Vector, order: usize) -> ChaCha8Rng {
        let mut h = splitmix64(seed ^ 0x6e6f_6973_795f_7472);
        for v in x.iter() {
            h = splitmix64(h ^ v.to_bits());
        }
        h = splitmix64(h ^ order as u64);
        ChaCha8Rng::seed_from_u64(h)
    }

    fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
        loop {
            let v = Vector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
            let norm = v.norm();
            if norm > 1e-3 {
                return v / norm;
            }
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Rounds `x` to `bits` significand bits (round half to even on the scaled value).
pub fn round_to_bits(x: f64, bits: u32) -> f64 {
    if bits >= 53 || x == 0.0 || !x.is_finite() {
        return x;
    }
    let mut e = x.abs().log2().floor() as i32;
    if 2f64.powi(e) > x.abs() {
        e -= 1;
    } else if 2f64.powi(e + 1) <= x.abs() {
        e += 1;
    }
    let shift = bits as i32 - 1 - e;
    if !(-1000..=1000).contains(&shift) {
        return x;
    }
    let scale = 2f64.powi(shift);
    (x * scale).round_ties_even() / scale
}

impl Oracle for NoisyOracle {
    fn dim(&self) -> usize {
        self.objective.dim()
    }

    fn noise(&self) -> NoiseProfile {
        self.noise
    }

    fn eval_f(&mut self, x: &Vector, zeta_f: f64) -> OracleOutcome<f64> {
        assert!(zeta_f > 0.0, "requested function accuracy must be positive");
        if zeta_f < self.noise.theta_f {
            return Err(NoiseFloor {
                requested: zeta_f,
                floor: self.noise.theta_f,
            });
        }
        let exact = self.objective.value(x);
        let value = match self.perturbation {
            Perturbation::Exact => exact,
            Perturbation::Bounded { seed, cap } => {
                let mut rng = self.draw(seed, x, 0);
                let u: f64 = rng.random_range(-1.0..=1.0);
                exact + zeta_f.min(cap) * u
            }
            Perturbation::Quantized { bits } => round_to_bits(exact, bits),
        };
        self.counters.f_evals += 1;
        Ok(Evaluated {
            value,
            guaranteed_accuracy: zeta_f,
        })
    }

    fn eval_derivs(&mut self, x: &Vector, j: usize, zeta_d: f64) -> OracleOutcome<Vec<DerivTensor>> {
        assert!(zeta_d > 0.0, "requested derivative accuracy must be positive");
        assert!(j >= 1, "derivative order must be at least one");
        if zeta_d < self.noise.theta_d {
            return Err(NoiseFloor {
                requested: zeta_d,
                floor: self.noise.theta_d,
            });
        }
        let n = self.dim();
        let tensors = (1..=j)
            .map(|l| {
                let exact = self.objective.derivative(x, l);
                match self.perturbation {
                    Perturbation::Exact => exact,
                    Perturbation::Bounded { seed, cap } => {
                        let mut rng = self.draw(seed, x, l);
                        let u: f64 = rng.random_range(-1.0..=1.0);
                        let w = Self::unit_vector(&mut rng, n);
                        let mut t = exact;
                        t.add_assign(&DerivTensor::rank_one(l, &w, zeta_d.min(cap) * u));
                        t
                    }
                    Perturbation::Quantized { bits } => exact.map_entries(|v| round_to_bits(v, bits)),
                }
            })
            .collect();
        self.counters.deriv_evals += 1;
        Ok(Evaluated {
            value: tensors,
            guaranteed_accuracy: zeta_d,
        })
    }

    fn counters(&self) -> EvalCounters {
        self.counters
    }
}
