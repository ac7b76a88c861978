//! Multi-indices, hierarchical sets, iterated stochastic integrals and the
//! low-order Itô–Taylor operators.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::scalar::{lit, Scalar};
use crate::sde::{brownian_increments, AmbientSde, NoiseSource};

/// Highest length supported by [`iterated_integral`].
pub const MAX_INTEGRAL_LENGTH: usize = 3;
/// Fewest sub-steps accepted by [`iterated_integral`].
pub const MIN_SUBSTEPS: usize = 100;

/// A finite sequence over `{0, …, m}`; `0` stands for `dt`, `α ≥ 1` for `dW^α`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Self {
        Self(entries)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    /// Length `l(ξ)`.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of zero entries `n(ξ)`.
    pub fn zeros(&self) -> usize {
        self.0.iter().filter(|&&j| j == 0).count()
    }

    /// `l(ξ) + n(ξ)`.
    pub fn order(&self) -> usize {
        self.len() + self.zeros()
    }

    pub fn first(&self) -> Option<usize> {
        self.0.first().copied()
    }

    pub fn last(&self) -> Option<usize> {
        self.0.last().copied()
    }

    /// `−ξ`: drop the first entry.
    pub fn without_first(&self) -> Option<Self> {
        (!self.is_empty()).then(|| Self(self.0[1..].to_vec()))
    }

    /// `ξ−`: drop the last entry.
    pub fn without_last(&self) -> Option<Self> {
        (!self.is_empty()).then(|| Self(self.0[..self.0.len() - 1].to_vec()))
    }

    pub fn prepend(&self, j: usize) -> Self {
        let mut v = Vec::with_capacity(self.len() + 1);
        v.push(j);
        v.extend_from_slice(&self.0);
        Self(v)
    }

    pub fn max_entry(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }
}

impl From<Vec<usize>> for MultiIndex {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

impl<const N: usize> From<[usize; N]> for MultiIndex {
    fn from(v: [usize; N]) -> Self {
        Self(v.to_vec())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, j) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{j}")?;
        }
        write!(f, ")")
    }
}

/// `Λ_k = {ξ : l(ξ) + n(ξ) ≤ k}` over `m` Brownian components.
pub fn lambda_set(k: usize, m: usize) -> BTreeSet<MultiIndex> {
    let mut out = BTreeSet::new();
    let mut frontier = vec![MultiIndex::empty()];
    while let Some(xi) = frontier.pop() {
        for j in 0..=m {
            let next = xi.prepend(j);
            if next.order() <= k {
                frontier.push(next);
            }
        }
        out.insert(xi);
    }
    out
}

/// `B(A) = {ξ ∉ A : −ξ ∈ A}`; `A` must be nonempty and closed under `−ξ`.
pub fn remainder_set(set: &BTreeSet<MultiIndex>, m: usize) -> Result<BTreeSet<MultiIndex>> {
    if set.is_empty() {
        return Err(invalid("remainder set of an empty index set"));
    }
    for xi in set {
        if xi.max_entry() > m {
            return Err(invalid(format!("multi-index {xi} has entries above m = {m}")));
        }
        if let Some(tail) = xi.without_first() {
            if !set.contains(&tail) {
                return Err(invalid(format!("index set is not hierarchical: {xi} present but {tail} missing")));
            }
        }
    }
    Ok(set
        .iter()
        .flat_map(|xi| (0..=m).map(move |j| xi.prepend(j)))
        .filter(|c| !set.contains(c))
        .collect())
}

/// Iterated integrals `I^ξ_{0,t}` of several multi-indices along one shared
/// Brownian path, given as an `n×m` increment matrix on a uniform grid.
///
/// The first entry of `ξ` is the innermost integration; each level is a
/// left-point (Itô) sum.
pub fn iterated_integrals_from_increments(
    indices: &[MultiIndex],
    increments: &DMatrix<f64>,
    dt: f64,
) -> Result<Vec<f64>> {
    let m = increments.ncols();
    indices
        .iter()
        .map(|xi| {
            if xi.len() > MAX_INTEGRAL_LENGTH {
                return Err(Error::UnsupportedOrder {
                    order: xi.len(),
                    max: MAX_INTEGRAL_LENGTH,
                });
            }
            if xi.max_entry() > m {
                return Err(invalid(format!("multi-index {xi} needs {} noise columns, have {m}", xi.max_entry())));
            }
            let l = xi.len();
            // levels[k] = running value of the integral of the first k entries.
            let mut levels = vec![0.0; l + 1];
            levels[0] = 1.0;
            for row in 0..increments.nrows() {
                for k in (1..=l).rev() {
                    let j = xi.entries()[k - 1];
                    let d = if j == 0 { dt } else { increments[(row, j - 1)] };
                    levels[k] += levels[k - 1] * d;
                }
            }
            Ok(levels[l])
        })
        .collect()
}

/// Left-point simulation of `I^ξ_{0,t}` on `n_substeps` uniform sub-steps.
pub fn iterated_integral(xi: &MultiIndex, noise: &NoiseSource, t: f64, n_substeps: usize) -> Result<f64> {
    if xi.len() > MAX_INTEGRAL_LENGTH {
        return Err(Error::UnsupportedOrder {
            order: xi.len(),
            max: MAX_INTEGRAL_LENGTH,
        });
    }
    if n_substeps < MIN_SUBSTEPS {
        return Err(invalid(format!("n_substeps must be at least {MIN_SUBSTEPS}, got {n_substeps}")));
    }
    if !(t > 0.0) {
        return Err(invalid(format!("integration horizon must be positive, got {t}")));
    }
    let m = xi.max_entry().max(1);
    let dt = t / n_substeps as f64;
    let inc = brownian_increments::<f64>(*noise, m, n_substeps, dt)?;
    Ok(iterated_integrals_from_increments(std::slice::from_ref(xi), &inc, dt)?[0])
}

/// Value and first two spatial derivatives of a map `f: ℝᵏ → ℝᵈ` at a point,
/// plus its time derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct JetData<T: Scalar> {
    pub value: DVector<T>,
    /// `d×k`.
    pub first: DMatrix<T>,
    /// `d` symmetric `k×k` Hessians.
    pub second: Vec<DMatrix<T>>,
    pub time_derivative: DVector<T>,
}

/// Relative asymmetry tolerated in the Hessians of a [`JetData`].
pub const JET_SYMMETRY_TOLERANCE: f64 = 1e-12;

impl<T: Scalar> JetData<T> {
    pub fn new(value: DVector<T>, first: DMatrix<T>, second: Vec<DMatrix<T>>) -> Result<Self> {
        let d = value.len();
        let k = first.ncols();
        if first.nrows() != d {
            return Err(Error::Dimension {
                what: "jet first derivative rows",
                expected: d,
                got: first.nrows(),
            });
        }
        if second.len() != d {
            return Err(Error::Dimension {
                what: "jet second derivative components",
                expected: d,
                got: second.len(),
            });
        }
        for h in &second {
            if h.shape() != (k, k) {
                return Err(Error::Dimension {
                    what: "jet hessian size",
                    expected: k,
                    got: h.nrows(),
                });
            }
            let scale = h.amax().max(T::one());
            if (h - h.transpose()).amax() > lit::<T>(JET_SYMMETRY_TOLERANCE) * scale {
                return Err(invalid("jet second derivative is not symmetric"));
            }
        }
        Ok(Self {
            value,
            first,
            second,
            time_derivative: DVector::zeros(d),
        })
    }

    pub fn with_time_derivative(mut self, dt: DVector<T>) -> Result<Self> {
        if dt.len() != self.value.len() {
            return Err(Error::Dimension {
                what: "jet time derivative",
                expected: self.value.len(),
                got: dt.len(),
            });
        }
        self.time_derivative = dt;
        Ok(self)
    }

    /// The identity map at `x`.
    pub fn identity(x: &DVector<T>) -> Self {
        let k = x.len();
        Self {
            value: x.clone(),
            first: DMatrix::identity(k, k),
            second: vec![DMatrix::zeros(k, k); k],
            time_derivative: DVector::zeros(k),
        }
    }

    /// The jet of an embedding `φ` at chart point `y`.
    pub fn from_embedding(emb: &crate::geometry::Embedding<T>, y: &DVector<T>) -> Result<Self> {
        Self::new(emb.phi(y)?, emb.d_phi(y)?, emb.d2_phi(y)?)
    }

    pub fn codomain_dim(&self) -> usize {
        self.value.len()
    }

    pub fn domain_dim(&self) -> usize {
        self.first.ncols()
    }

    /// `D²f(u, w)` as a codomain vector.
    pub fn second_along(&self, u: &DVector<T>, w: &DVector<T>) -> DVector<T> {
        DVector::from_iterator(self.second.len(), self.second.iter().map(|h| u.dot(&(h * w))))
    }
}

/// `L_ξ f` at `(x, t)` for `l(ξ) + n(ξ) ≤ 2`, with identity quadratic covariation.
pub fn l_operator<T: Scalar>(
    xi: &MultiIndex,
    f: &JetData<T>,
    sde: &AmbientSde<T>,
    x: &DVector<T>,
    t: T,
) -> Result<DVector<T>> {
    if f.domain_dim() != sde.dim_state() {
        return Err(Error::Dimension {
            what: "jet domain",
            expected: sde.dim_state(),
            got: f.domain_dim(),
        });
    }
    let m = sde.dim_noise();
    if xi.order() > 2 {
        return Err(Error::UnsupportedOrder {
            order: xi.order(),
            max: 2,
        });
    }
    if xi.max_entry() > m {
        return Err(invalid(format!("multi-index {xi} exceeds noise dimension {m}")));
    }
    match xi.entries() {
        [] => Ok(f.value.clone()),
        [0] => {
            let a = sde.drift(x, t)?;
            let b = sde.diffusion(x, t)?;
            let mut out = &f.time_derivative + &f.first * a;
            for al in 0..m {
                let ba = b.column(al).into_owned();
                out += f.second_along(&ba, &ba) * lit::<T>(0.5);
            }
            Ok(out)
        }
        [al] => {
            let b = sde.diffusion(x, t)?;
            Ok(&f.first * b.column(al - 1))
        }
        [al, be] => {
            // L_α(L_β f) = Df·(Db_β · b_α) + D²f(b_α, b_β)
            let b = sde.diffusion(x, t)?;
            let jac = sde.diffusion_jacobian(x, t)?;
            let ba = b.column(al - 1).into_owned();
            let bb = b.column(be - 1).into_owned();
            let inner = &jac[be - 1] * &ba;
            Ok(&f.first * inner + f.second_along(&ba, &bb))
        }
        _ => unreachable!("order checked above"),
    }
}

/// Leading coefficients of the mean-square growth of `z_t = f(X_t) − F(Y_t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorGrowth<T: Scalar> {
    /// Coefficient of `t` in `E|z|²`: `Σ_α |Df b_α − DF B_α|²`.
    pub half_order: T,
    /// Drift-dependent part of the `t²` coefficient:
    /// `|Df a − DF A + ½ Σ_α D²f(b_α, b_α) − ½ Σ_α D²F(B_α, B_α)|²`.
    pub first_order_drift: T,
}

/// Error-growth coefficients for `f(X)` against `F(Y)` started at matching points.
///
/// `ambient` and `chart` are `(drift, diffusion)` of the two SDEs at the start point.
pub fn error_growth_coefficients<T: Scalar>(
    f: &JetData<T>,
    big_f: &JetData<T>,
    ambient: (&DVector<T>, &DMatrix<T>),
    chart: (&DVector<T>, &DMatrix<T>),
) -> Result<ErrorGrowth<T>> {
    let (a, b) = ambient;
    let (big_a, big_b) = chart;
    if f.codomain_dim() != big_f.codomain_dim() {
        return Err(invalid(format!(
            "codomain mismatch: {} vs {}",
            f.codomain_dim(),
            big_f.codomain_dim()
        )));
    }
    if a.len() != f.domain_dim() || b.nrows() != f.domain_dim() {
        return Err(invalid("ambient coefficients do not match the domain of f"));
    }
    if big_a.len() != big_f.domain_dim() || big_b.nrows() != big_f.domain_dim() {
        return Err(invalid("chart coefficients do not match the domain of F"));
    }
    if b.ncols() != big_b.ncols() {
        return Err(invalid(format!(
            "noise dimension mismatch: {} vs {}",
            b.ncols(),
            big_b.ncols()
        )));
    }
    let half = lit::<T>(0.5);
    let mut half_order = T::zero();
    let mut drift_gap = &f.first * a - &big_f.first * big_a;
    for al in 0..b.ncols() {
        let ba = b.column(al).into_owned();
        let bba = big_b.column(al).into_owned();
        half_order += (&f.first * &ba - &big_f.first * &bba).norm_squared();
        drift_gap += (f.second_along(&ba, &ba) - big_f.second_along(&bba, &bba)) * half;
    }
    Ok(ErrorGrowth {
        half_order,
        first_order_drift: drift_gap.norm_squared(),
    })
}
