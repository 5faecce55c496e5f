//! Probabilists' Hermite polynomials `He_n`, the scaled Hermite basis functions
//! of the velocity expansion, and Gauss–Hermite quadrature.
//!
//! The quadrature rule integrates against the standard normal density
//! `φ(x) = exp(-x²/2)/√(2π)`, so the weights sum to one. It is used as an
//! independent oracle for the moment algebra and to obtain the largest root of
//! `He_n`, which bounds the characteristic speeds of a Grad-type system.

use crate::error::{Error, Result};
use crate::multi_index::MultiIndex;
use crate::scalar::Real;

/// `He_n(x)` by the three-term recursion. Negative degrees give zero.
pub fn he_eval<T: Real>(n: i64, x: T) -> T {
    if n < 0 {
        return T::zero();
    }
    let mut prev = T::zero();
    let mut cur = T::one();
    for k in 0..n {
        let next = x * cur - T::from_count(k as usize) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `He_n'(x) = n He_{n-1}(x)`.
pub fn he_derivative<T: Real>(n: i64, x: T) -> T {
    if n <= 0 {
        return T::zero();
    }
    T::from_count(n as usize) * he_eval(n - 1, x)
}

/// Fills `out[k] = He_k(x)` for `k < out.len()`.
pub fn he_fill<T: Real>(x: T, out: &mut [T]) {
    if out.is_empty() {
        return;
    }
    out[0] = T::one();
    if out.len() > 1 {
        out[1] = x;
    }
    for k in 1..out.len().saturating_sub(1) {
        out[k + 1] = x * out[k] - T::from_count(k) * out[k - 1];
    }
}

/// Values of `He_0 … He_N` cached at a fixed set of points.
#[derive(Clone, Debug)]
pub struct HermiteTable<T> {
    max_degree: usize,
    points: Vec<T>,
    values: Vec<T>,
}

impl<T: Real> HermiteTable<T> {
    pub fn new(max_degree: usize, points: Vec<T>) -> Self {
        let stride = max_degree + 1;
        let mut values = vec![T::zero(); stride * points.len()];
        for (p, &x) in points.iter().enumerate() {
            he_fill(x, &mut values[p * stride..(p + 1) * stride]);
        }
        Self { max_degree, points, values }
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    /// `He_degree(points[point])`; zero for negative degrees.
    #[inline]
    pub fn value(&self, degree: i64, point: usize) -> T {
        if degree < 0 {
            return T::zero();
        }
        let d = degree as usize;
        assert!(d <= self.max_degree, "degree {d} beyond table maximum {}", self.max_degree);
        self.values[point * (self.max_degree + 1) + d]
    }
}

/// One-dimensional factor of the basis function:
/// `(2π)^{-1/2} θ^{-(n+1)/2} He_n(v) exp(-v²/2)`.
pub fn basis_factor<T: Real>(theta: T, n: i64, v: T) -> T {
    if n < 0 {
        return T::zero();
    }
    let inv_sqrt_2pi = T::lit(0.398_942_280_401_432_7);
    inv_sqrt_2pi * theta.powf(-(T::from_count(n as usize) + T::one()) / T::lit(2.0)) * he_eval(n, v) * (-v * v / T::lit(2.0)).exp()
}

/// Basis function `H_{θ,α}(v)` for the scaled velocity `v = (ξ - u)/√θ`.
pub fn basis_weight<T: Real>(theta: T, alpha: &MultiIndex, v: &[T]) -> Result<T> {
    let comps: Vec<i64> = alpha.components().map(|c| c as i64).collect();
    basis_weight_signed(theta, &comps, v)
}

/// Same as [`basis_weight`] but accepts possibly negative components, in which
/// case the basis function is zero.
pub fn basis_weight_signed<T: Real>(theta: T, alpha: &[i64], v: &[T]) -> Result<T> {
    if !(theta > T::zero()) {
        return Err(Error::NonPositiveTemperature(theta.to_f64_lossy()));
    }
    if alpha.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: alpha.len(), got: v.len() });
    }
    if alpha.iter().any(|&a| a < 0) {
        return Ok(T::zero());
    }
    Ok(alpha.iter().zip(v).map(|(&a, &x)| basis_factor(theta, a, x)).fold(T::one(), |acc, f| acc * f))
}

/// Gauss–Hermite rule for `∫ g(x) φ(x) dx` with the standard normal density `φ`.
#[derive(Clone, Debug)]
pub struct QuadratureRule<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

/// Node count used by the quadrature oracles.
pub const DEFAULT_QUADRATURE_NODES: usize = 40;

impl<T: Real> QuadratureRule<T> {
    /// `n`-point rule, exact for polynomials of degree `≤ 2n - 1`.
    pub fn gauss_hermite(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one node");
        let nodes = hermite_roots::<T>(n);
        let weights = nodes
            .iter()
            .map(|&x| {
                let (_, prev) = normalized_pair(n, x);
                T::one() / (T::from_count(n) * prev * prev)
            })
            .collect();
        Self { nodes, weights }
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut g: impl FnMut(T) -> T) -> T {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * g(x)).sum()
    }

    /// Tensor-product rule in `dim` dimensions for `∫ g(x) Π φ(x_d) dx`.
    pub fn integrate_nd(&self, dim: usize, mut g: impl FnMut(&[T]) -> T) -> T {
        let n = self.len();
        let mut x = vec![T::zero(); dim];
        let mut idx = vec![0usize; dim];
        let mut acc = T::zero();
        loop {
            let mut w = T::one();
            for d in 0..dim {
                x[d] = self.nodes[idx[d]];
                w *= self.weights[idx[d]];
            }
            acc += w * g(&x);
            let mut d = 0;
            loop {
                if d == dim {
                    return acc;
                }
                idx[d] += 1;
                if idx[d] < n {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    }
}

// (ψ_n(x), ψ_{n-1}(x)) for the orthonormal ψ_k = He_k / √(k!).
fn normalized_pair<T: Real>(n: usize, x: T) -> (T, T) {
    let mut prev = T::zero();
    let mut cur = T::one();
    for k in 0..n {
        let next = (x * cur - T::from_count(k).sqrt() * prev) / T::from_count(k + 1).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

// Number of eigenvalues of the Jacobi matrix of He_n below x (Sturm count).
fn sturm_count<T: Real>(n: usize, x: T) -> usize {
    let tiny = T::min_positive_value().sqrt();
    let mut count = 0;
    let mut q = T::zero();
    for k in 0..n {
        q = if k == 0 { -x } else { -x - T::from_count(k) / q };
        // a vanishing pivot is nudged to the negative side and counted as such
        if q.abs() < tiny {
            q = -tiny;
        }
        if q < T::zero() {
            count += 1;
        }
    }
    count
}

/// Roots of `He_n` in increasing order (the Gauss–Hermite nodes).
pub fn hermite_roots<T: Real>(n: usize) -> Vec<T> {
    if n == 0 {
        return Vec::new();
    }
    // Gershgorin bound for the Jacobi matrix with off-diagonals √k.
    let bound = T::lit(2.0) * T::from_count(n).sqrt() + T::one();
    let mut roots = Vec::with_capacity(n);
    for k in 0..n {
        let (mut lo, mut hi) = (-bound, bound);
        for _ in 0..200 {
            let mid = (lo + hi) / T::lit(2.0);
            if mid <= lo || mid >= hi {
                break;
            }
            if sturm_count(n, mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let mut x = (lo + hi) / T::lit(2.0);
        // Newton polish on the orthonormal polynomial: ψ_n' = √n ψ_{n-1}.
        for _ in 0..3 {
            let (p, dp) = normalized_pair(n, x);
            let deriv = T::from_count(n).sqrt() * dp;
            if deriv == T::zero() {
                break;
            }
            let step = p / deriv;
            if step.abs() > (hi - lo).abs() + T::epsilon() {
                break;
            }
            x -= step;
        }
        roots.push(x);
    }
    roots
}

/// Largest root of `He_n`; the spectral radius bound of a Grad system of order `n - 1`.
pub fn largest_root<T: Real>(n: usize) -> T {
    *hermite_roots::<T>(n).last().expect("n ≥ 1")
}
