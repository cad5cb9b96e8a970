//! Taylor models built from inexact derivative tensors.
//!
//! A [`TaylorModel`] stores *coefficient* tensors `C_l` and evaluates
//!
//! ```text
//! T(x, s) = f(x) + sum_{l=1}^{j} C_l[s]^l
//! ```
//!
//! literally, with no factorial factors applied at evaluation time. Models
//! built from derivative tensors via [`TaylorModel::from_derivatives`] store
//! `C_l = grad^l f / l!`, so that `T` is the usual truncated Taylor series.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense real vector used for iterates, steps and displacements.
pub type Vector = DVector<f64>;

/// `l!` as a float.
pub fn factorial(l: usize) -> f64 {
    (1..=l).fold(1.0, |acc, i| acc * i as f64)
}

/// Dense symmetric tensor of order `l >= 1` over `R^n`, stored row-major with
/// `n^l` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivTensor {
    order: usize,
    dim: usize,
    data: Vec<f64>,
}

impl DerivTensor {
    pub fn zeros(order: usize, dim: usize) -> Self {
        assert!(order >= 1 && dim >= 1, "tensor order and dimension must be positive");
        Self {
            order,
            dim,
            data: vec![0.0; dim.pow(order as u32)],
        }
    }

    /// Builds a tensor entry by entry. The closure receives the full index
    /// tuple; the caller is responsible for returning symmetric values.
    pub fn from_fn(order: usize, dim: usize, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(order, dim);
        let mut idx = vec![0usize; order];
        for slot in t.data.iter_mut() {
            *slot = f(&idx);
            increment_index(&mut idx, dim);
        }
        t
    }

    pub fn from_vector(v: &Vector) -> Self {
        Self {
            order: 1,
            dim: v.len(),
            data: v.iter().copied().collect(),
        }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "matrix must be square");
        let n = m.nrows();
        Self::from_fn(2, n, |i| m[(i[0], i[1])])
    }

    /// Random symmetric tensor with entries roughly uniform in `[-scale, scale]`.
    pub fn random_symmetric(order: usize, dim: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut t = Self::from_fn(order, dim, |_| rng.random_range(-scale..=scale));
        t.symmetrize();
        t
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let k = self.flat_index(idx);
        self.data[k] = value;
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.order);
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    /// The order-1 tensor as a vector.
    pub fn as_vector(&self) -> Vector {
        assert_eq!(self.order, 1);
        Vector::from_column_slice(&self.data)
    }

    /// The order-2 tensor as a matrix.
    pub fn as_matrix(&self) -> DMatrix<f64> {
        assert_eq!(self.order, 2);
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            order: self.order,
            dim: self.dim,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!((self.order, self.dim), (other.order, other.dim));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Applies `f` to every entry.
    pub fn map_entries(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            order: self.order,
            dim: self.dim,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `v ⊗ v ⊗ ... ⊗ v` (order copies) times `c`.
    pub fn rank_one(order: usize, v: &Vector, c: f64) -> Self {
        Self::from_fn(order, v.len(), |idx| c * idx.iter().map(|&i| v[i]).product::<f64>())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Replaces every entry by the mean over all permutations of its index.
    pub fn symmetrize(&mut self) {
        if self.order == 1 {
            return;
        }
        let mut sums: std::collections::HashMap<Vec<usize>, (f64, usize)> = Default::default();
        let mut idx = vec![0usize; self.order];
        for &v in &self.data {
            let mut key = idx.clone();
            key.sort_unstable();
            let e = sums.entry(key).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
            increment_index(&mut idx, self.dim);
        }
        let mut idx = vec![0usize; self.order];
        for slot in self.data.iter_mut() {
            let mut key = idx.clone();
            key.sort_unstable();
            let (s, c) = sums[&key];
            *slot = s / c as f64;
            increment_index(&mut idx, self.dim);
        }
    }

    /// Largest entry difference between `S[i..]` and `S[perm(i..)]` over all
    /// indices and adjacent transpositions.
    pub fn asymmetry(&self) -> f64 {
        if self.order == 1 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        let mut idx = vec![0usize; self.order];
        for &v in &self.data {
            for p in 0..self.order - 1 {
                let mut swapped = idx.clone();
                swapped.swap(p, p + 1);
                worst = worst.max((v - self.get(&swapped)).abs());
            }
            increment_index(&mut idx, self.dim);
        }
        worst
    }

    /// Contracts the last `k` indices with `v`, returning the data of a tensor
    /// of order `order - k` (a scalar in a length-1 slice when `k == order`).
    fn contract(&self, v: &Vector, k: usize) -> Vec<f64> {
        assert_eq!(v.len(), self.dim, "dimension mismatch in tensor contraction");
        let mut cur = self.data.clone();
        for _ in 0..k {
            cur = cur
                .chunks_exact(self.dim)
                .map(|row| row.iter().zip(v.iter()).map(|(a, b)| a * b).sum())
                .collect();
        }
        cur
    }

    /// `S[v]^l`.
    pub fn apply(&self, v: &Vector) -> f64 {
        self.contract(v, self.order)[0]
    }

    /// `S[v]^(l-1)`, the vector whose inner product with `w` is `S[v,...,v,w]`.
    /// The gradient of `v -> S[v]^l` is `l * S[v]^(l-1)`.
    pub fn apply_partial(&self, v: &Vector) -> Vector {
        Vector::from_vec(self.contract(v, self.order - 1))
    }

    /// `S[v_1, ..., v_l]` for distinct arguments.
    pub fn apply_multi(&self, args: &[&Vector]) -> f64 {
        assert_eq!(args.len(), self.order);
        let mut cur = self.data.clone();
        for v in args.iter().rev() {
            cur = cur
                .chunks_exact(self.dim)
                .map(|row| row.iter().zip(v.iter()).map(|(a, b)| a * b).sum())
                .collect();
        }
        cur[0]
    }
}

fn increment_index(idx: &mut [usize], dim: usize) {
    for slot in idx.iter_mut().rev() {
        *slot += 1;
        if *slot < dim {
            return;
        }
        *slot = 0;
    }
}

/// Induced Euclidean norm `max_{|v|=1} |S[v]^l|`.
///
/// Exact for `l = 1` (vector norm) and `l = 2` (largest absolute eigenvalue).
/// For `l >= 3` this is a lower bound obtained by shifted power iterations
/// from `n_samples` deterministic random starts.
pub fn tensor_norm(t: &DerivTensor, n_samples: usize) -> f64 {
    assert!(n_samples >= 1);
    match t.order() {
        1 => t.as_vector().norm(),
        2 => t
            .as_matrix()
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs())),
        l => {
            let n = t.dim();
            let mut rng = ChaCha8Rng::seed_from_u64(0x5e_ed0f_7e45);
            // Shift large enough for monotone ascent of the shifted power method.
            let shift = (l - 1) as f64 * t.frobenius_norm();
            let mut best = 0.0f64;
            for _ in 0..n_samples {
                let mut v = Vector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
                if v.norm() == 0.0 {
                    continue;
                }
                v /= v.norm();
                for sign in [1.0, -1.0] {
                    let mut u = v.clone();
                    for _ in 0..200 {
                        let mut next = t.apply_partial(&u) * sign + &u * shift;
                        let nn = next.norm();
                        if nn == 0.0 {
                            break;
                        }
                        next /= nn;
                        let moved = (&next - &u).norm();
                        u = next;
                        if moved < 1e-13 {
                            break;
                        }
                    }
                    best = best.max(t.apply(&u).abs());
                }
            }
            best
        }
    }
}

/// `sum_{l=1}^{j} delta^l / l!`.
pub fn sum_delta_powers(j: usize, delta: f64) -> f64 {
    assert!(j >= 1 && delta >= 0.0);
    let mut term = 1.0;
    let mut total = 0.0;
    for l in 1..=j {
        term *= delta / l as f64;
        total += term;
    }
    total
}

/// Truncated Taylor model at a point.
#[derive(Debug, Clone)]
pub struct TaylorModel {
    center: Vector,
    fbar: Option<f64>,
    fbar_accuracy: Option<f64>,
    /// Coefficient tensors for orders `1..=degree`.
    tensors: Vec<DerivTensor>,
    tensor_accuracy: f64,
}

impl TaylorModel {
    /// Model whose tensors are used as-is in `f + sum C_l[s]^l`.
    pub fn from_coefficients(center: Vector, tensors: Vec<DerivTensor>, tensor_accuracy: f64) -> Self {
        assert!(!tensors.is_empty(), "a model needs at least the first-order tensor");
        assert!(tensor_accuracy > 0.0, "tensor accuracy must be positive");
        for (l, t) in tensors.iter().enumerate() {
            assert_eq!(t.order(), l + 1, "tensors must be ordered 1..=degree");
            assert_eq!(t.dim(), center.len(), "tensor dimension must match the center");
        }
        Self {
            center,
            fbar: None,
            fbar_accuracy: None,
            tensors,
            tensor_accuracy,
        }
    }

    /// Model from derivative tensors `grad^l f`, stored as `grad^l f / l!`.
    pub fn from_derivatives(center: Vector, derivs: &[DerivTensor], tensor_accuracy: f64) -> Self {
        let tensors = derivs
            .iter()
            .enumerate()
            .map(|(l, t)| t.scaled(1.0 / factorial(l + 1)))
            .collect();
        Self::from_coefficients(center, tensors, tensor_accuracy)
    }

    pub fn with_value(mut self, fbar: f64, accuracy: f64) -> Self {
        self.fbar = Some(fbar);
        self.fbar_accuracy = Some(accuracy);
        self
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn degree(&self) -> usize {
        self.tensors.len()
    }

    pub fn fbar(&self) -> Option<f64> {
        self.fbar
    }

    pub fn fbar_accuracy(&self) -> Option<f64> {
        self.fbar_accuracy
    }

    pub fn tensors(&self) -> &[DerivTensor] {
        &self.tensors
    }

    /// Coefficient tensor of order `l` (1-based).
    pub fn tensor(&self, l: usize) -> &DerivTensor {
        &self.tensors[l - 1]
    }

    pub fn tensor_accuracy(&self) -> f64 {
        self.tensor_accuracy
    }

    /// `T(x, s)` using every stored order.
    ///
    /// # Panics
    /// If the model carries no function value.
    pub fn taylor_value(&self, s: &Vector) -> f64 {
        let f = self.fbar.expect("taylor_value needs a function value in the model");
        f - self.decrement(s)
    }

    /// `T(x, 0) - T(x, s)` using every stored order.
    pub fn decrement(&self, s: &Vector) -> f64 {
        self.decrement_order(self.degree(), s)
    }

    /// `T_j(x, 0) - T_j(x, s) = -sum_{l=1}^{j} C_l[s]^l`.
    pub fn decrement_order(&self, j: usize, s: &Vector) -> f64 {
        assert!(j >= 1 && j <= self.degree(), "order {j} outside the model degree");
        assert_eq!(s.len(), self.dim(), "step dimension mismatch");
        -self.tensors[..j].iter().map(|t| t.apply(s)).sum::<f64>()
    }

    /// Gradient in `s` of `decrement_order(j, s)`.
    pub fn decrement_gradient(&self, j: usize, s: &Vector) -> Vector {
        let mut g = -self.tensors[0].as_vector();
        for t in &self.tensors[1..j] {
            g -= t.apply_partial(s) * t.order() as f64;
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;
    use proptest::prelude::*;
    use rand::Rng;

    fn diag_model(g: Vector, h: [f64; 2], fbar: f64) -> TaylorModel {
        let hess = DMatrix::from_diagonal(&dvector![h[0], h[1]]);
        TaylorModel::from_coefficients(
            dvector![0.0, 0.0],
            vec![DerivTensor::from_vector(&g), DerivTensor::from_matrix(&hess)],
            1e-3,
        )
        .with_value(fbar, 1e-3)
    }

    #[test]
    fn taylor_value_examples() {
        let m = TaylorModel::from_coefficients(
            dvector![0.0, 0.0],
            vec![DerivTensor::from_vector(&dvector![3.0, 4.0])],
            1.0,
        )
        .with_value(2.0, 0.0);
        assert_eq!(m.taylor_value(&dvector![1.0, 0.0]), 5.0);

        let m = diag_model(dvector![0.0, 0.0], [-2.0, 1.0], 0.0);
        assert_eq!(m.taylor_value(&dvector![1.0, 0.0]), -2.0);
    }

    #[test]
    fn taylor_value_at_zero_is_fbar() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tensors = (1..=3)
            .map(|l| DerivTensor::random_symmetric(l, 3, 1.0, &mut rng))
            .collect();
        let m = TaylorModel::from_coefficients(Vector::zeros(3), tensors, 0.1).with_value(1.75, 0.1);
        assert_eq!(m.taylor_value(&Vector::zeros(3)), 1.75);
    }

    #[test]
    #[should_panic(expected = "function value")]
    fn taylor_value_without_fbar_panics() {
        let m = TaylorModel::from_coefficients(dvector![0.0], vec![DerivTensor::from_vector(&dvector![1.0])], 1.0);
        m.taylor_value(&dvector![1.0]);
    }

    #[test]
    fn decrement_examples() {
        let m = diag_model(dvector![3.0, 4.0], [0.0, 0.0], 0.0);
        assert_relative_eq!(m.decrement_order(1, &dvector![-0.3, -0.4]), 2.5, epsilon = 1e-15);
        assert_eq!(m.decrement(&dvector![0.0, 0.0]), 0.0);

        // Coefficients diag(-2, 1) taken literally.
        let m = diag_model(dvector![0.0, 0.0], [-2.0, 1.0], 0.0);
        assert_eq!(m.decrement(&dvector![1.0, 0.0]), 2.0);

        // The same numbers read as a Hessian get the 1/2 factor.
        let hess = DMatrix::from_diagonal(&dvector![-2.0, 1.0]);
        let m = TaylorModel::from_derivatives(
            dvector![0.0, 0.0],
            &[
                DerivTensor::from_vector(&dvector![0.0, 0.0]),
                DerivTensor::from_matrix(&hess),
            ],
            1e-3,
        );
        assert_eq!(m.decrement(&dvector![1.0, 0.0]), 1.0);
    }

    #[test]
    fn tensor_norm_examples() {
        assert_eq!(tensor_norm(&DerivTensor::from_vector(&dvector![3.0, 4.0]), 1), 5.0);
        let h = DMatrix::from_diagonal(&dvector![-2.0, 1.0]);
        assert_relative_eq!(tensor_norm(&DerivTensor::from_matrix(&h), 1), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn tensor_norm_order3_dominates_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = DerivTensor::random_symmetric(3, 3, 1.0, &mut rng);
        let norm = tensor_norm(&t, 16);
        for _ in 0..100 {
            let mut v = Vector::from_fn(3, |_, _| rng.random_range(-1.0..=1.0));
            v /= v.norm();
            assert!(norm >= t.apply(&v).abs() - 1e-12);
        }
    }

    #[test]
    fn sum_delta_powers_examples() {
        assert_eq!(sum_delta_powers(2, 1.0), 1.5);
        assert_relative_eq!(sum_delta_powers(3, 0.5), 0.5 + 0.125 + 0.125 / 6.0, epsilon = 1e-15);
        assert_eq!(sum_delta_powers(1, 0.0), 0.0);
    }

    #[test]
    fn chi_inequalities_on_grid() {
        for j in 1..=8 {
            for i in 1..=100 {
                let delta = i as f64 / 100.0;
                let s = sum_delta_powers(j, delta);
                assert!(delta.min(1.0) <= s, "lower chi bound j={j} delta={delta}");
                assert!(
                    s < 2.0 * delta.max(delta.powi(j as i32)),
                    "upper chi bound j={j} delta={delta}"
                );
            }
        }
    }

    #[test]
    fn decrement_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tensors = (1..=3)
            .map(|l| DerivTensor::random_symmetric(l, 3, 1.0, &mut rng))
            .collect();
        let m = TaylorModel::from_coefficients(Vector::zeros(3), tensors, 0.1);
        let s = dvector![0.3, -0.2, 0.5];
        let g = m.decrement_gradient(3, &s);
        let h = 1e-6;
        for i in 0..3 {
            let mut p = s.clone();
            p[i] += h;
            let mut q = s.clone();
            q[i] -= h;
            let fd = (m.decrement(&p) - m.decrement(&q)) / (2.0 * h);
            assert_relative_eq!(g[i], fd, epsilon = 1e-7);
        }
    }

    proptest! {
        #[test]
        fn decrement_ignores_fbar(seed in any::<u64>(), f1 in -1e3f64..1e3, f2 in -1e3f64..1e3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tensors: Vec<_> = (1..=3).map(|l| DerivTensor::random_symmetric(l, 2, 2.0, &mut rng)).collect();
            let s = Vector::from_fn(2, |_, _| rng.random_range(-1.0..=1.0));
            let a = TaylorModel::from_coefficients(Vector::zeros(2), tensors.clone(), 0.1).with_value(f1, 0.1);
            let b = TaylorModel::from_coefficients(Vector::zeros(2), tensors, 0.1).with_value(f2, 0.1);
            prop_assert_eq!(a.decrement(&s), b.decrement(&s));
            let diff = a.taylor_value(&s) - a.taylor_value(&Vector::zeros(2));
            prop_assert!((diff + a.decrement(&s)).abs() <= 1e-9 * (1.0 + f1.abs()));
        }

        #[test]
        fn symmetric_tensor_invariant_under_argument_permutation(seed in any::<u64>(), order in 2usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = DerivTensor::random_symmetric(order, 3, 1.0, &mut rng);
            prop_assert!(t.asymmetry() <= 1e-12);
            let vs: Vec<Vector> = (0..order).map(|_| Vector::from_fn(3, |_, _| rng.random_range(-1.0..=1.0))).collect();
            let args: Vec<&Vector> = vs.iter().collect();
            let mut rev = args.clone();
            rev.reverse();
            let mut rot = args.clone();
            rot.rotate_left(1);
            let base = t.apply_multi(&args);
            prop_assert!((base - t.apply_multi(&rev)).abs() <= 1e-12);
            prop_assert!((base - t.apply_multi(&rot)).abs() <= 1e-12);
        }
    }
}
