//! Gauss–Hermite quadrature for `∫ e^{-z²} g(z) dz`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid, Result};
use crate::scalar::{from_usize, lit, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite<T: Scalar> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

/// Orthonormal Hermite polynomials `p̂_0..p̂_{n}` at `x` (w.r.t. weight `e^{-x²}`).
fn orthonormal_hermite<T: Scalar>(n: usize, x: T) -> Vec<T> {
    let mut p = Vec::with_capacity(n + 1);
    p.push(T::one() / T::pi().sqrt().sqrt());
    if n == 0 {
        return p;
    }
    p.push(lit::<T>(2.0).sqrt() * x * p[0]);
    for k in 1..n {
        let kf = from_usize::<T>(k);
        let next = (lit::<T>(2.0) / (kf + T::one())).sqrt() * x * p[k] - (kf / (kf + T::one())).sqrt() * p[k - 1];
        p.push(next);
    }
    p
}

impl<T: Scalar> GaussHermite<T> {
    /// `n`-point rule, exact for polynomials of degree `2n − 1`.
    ///
    /// Nodes come from the Golub–Welsch eigenproblem and are polished by Newton
    /// iterations on the three-term recurrence; weights use the Christoffel
    /// formula `w = 1 / Σ_{k<n} p̂_k(x)²`.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("quadrature needs at least one node"));
        }
        let mut jacobi = DMatrix::<T>::zeros(n, n);
        for k in 1..n {
            let off = (from_usize::<T>(k) / lit(2.0)).sqrt();
            jacobi[(k, k - 1)] = off;
            jacobi[(k - 1, k)] = off;
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut nodes: Vec<T> = eig.eigenvalues.iter().copied().collect();
        nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));

        let nf = from_usize::<T>(n);
        for x in nodes.iter_mut() {
            for _ in 0..3 {
                let p = orthonormal_hermite(n, *x);
                // p̂_n' = √(2n) p̂_{n-1}
                let dp = (lit::<T>(2.0) * nf).sqrt() * p[n - 1];
                if dp == T::zero() {
                    break;
                }
                *x -= p[n] / dp;
            }
        }
        // Symmetrise: the rule is exactly symmetric about 0.
        for k in 0..n / 2 {
            let s = (nodes[n - 1 - k] - nodes[k]) / lit(2.0);
            nodes[k] = -s;
            nodes[n - 1 - k] = s;
        }
        if n % 2 == 1 {
            nodes[n / 2] = T::zero();
        }
        let weights = nodes
            .iter()
            .map(|&x| {
                let p = orthonormal_hermite(n - 1, x);
                T::one() / p.iter().fold(T::zero(), |acc, v| acc + *v * *v)
            })
            .collect();
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// `∫ e^{-z²} g(z) dz`.
    pub fn integrate<F: Fn(T) -> T>(&self, g: F) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&x, &w)| acc + w * g(x))
    }

    /// Nodes/weights for `∫ f(x) dx` under `x = center + scale·√2·z`:
    /// returns `(x_k, ω_k)` with `∫ f ≈ Σ ω_k f(x_k)`, where
    /// `ω_k = scale·√2·w_k·e^{z_k²}`.
    pub fn shifted(&self, center: T, scale: T) -> (Vec<T>, Vec<T>) {
        let s2 = scale * lit::<T>(2.0).sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| (center + s2 * z, s2 * w * (z * z).exp()))
            .unzip()
    }
}
