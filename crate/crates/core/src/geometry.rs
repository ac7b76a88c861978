//! Embedded submanifolds `φ: ℝⁿ → ℝʳ`, their induced metric, the tangent
//! projection and the second-order jet of the metric (nearest-point) projection.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::scalar::{lit, Scalar};

pub type PointMap<T> = Arc<dyn Fn(&DVector<T>) -> DVector<T> + Send + Sync>;
pub type JacobianMap<T> = Arc<dyn Fn(&DVector<T>) -> DMatrix<T> + Send + Sync>;
/// Second derivatives: one `n×n` Hessian per ambient component.
pub type HessianMap<T> = Arc<dyn Fn(&DVector<T>) -> Vec<DMatrix<T>> + Send + Sync>;

/// Smallest admissible singular value of `dφ`.
pub const IMMERSION_TOLERANCE: f64 = 1e-8;

/// A chart parametrisation `φ` with analytic first and second derivatives.
#[derive(Clone)]
pub struct Embedding<T: Scalar> {
    dim_chart: usize,
    dim_ambient: usize,
    phi: PointMap<T>,
    d_phi: JacobianMap<T>,
    d2_phi: HessianMap<T>,
}

impl<T: Scalar> fmt::Debug for Embedding<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Embedding")
            .field("dim_chart", &self.dim_chart)
            .field("dim_ambient", &self.dim_ambient)
            .finish()
    }
}

impl<T: Scalar> Embedding<T> {
    pub fn new<P, D, H>(dim_chart: usize, dim_ambient: usize, phi: P, d_phi: D, d2_phi: H) -> Result<Self>
    where
        P: Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
        D: Fn(&DVector<T>) -> DMatrix<T> + Send + Sync + 'static,
        H: Fn(&DVector<T>) -> Vec<DMatrix<T>> + Send + Sync + 'static,
    {
        if dim_chart == 0 || dim_ambient < dim_chart {
            return Err(invalid(format!(
                "embedding needs 0 < n <= r (got n = {dim_chart}, r = {dim_ambient})"
            )));
        }
        Ok(Self {
            dim_chart,
            dim_ambient,
            phi: Arc::new(phi),
            d_phi: Arc::new(d_phi),
            d2_phi: Arc::new(d2_phi),
        })
    }

    pub fn dim_chart(&self) -> usize {
        self.dim_chart
    }

    pub fn dim_ambient(&self) -> usize {
        self.dim_ambient
    }

    fn check_chart(&self, y: &DVector<T>) -> Result<()> {
        if y.len() != self.dim_chart {
            return Err(Error::Dimension {
                what: "chart point",
                expected: self.dim_chart,
                got: y.len(),
            });
        }
        Ok(())
    }

    pub fn phi(&self, y: &DVector<T>) -> Result<DVector<T>> {
        self.check_chart(y)?;
        let p = (self.phi)(y);
        if p.len() != self.dim_ambient {
            return Err(Error::Dimension {
                what: "embedding output",
                expected: self.dim_ambient,
                got: p.len(),
            });
        }
        Ok(p)
    }

    /// `r×n` Jacobian `∂φ^γ/∂y^a`.
    pub fn d_phi(&self, y: &DVector<T>) -> Result<DMatrix<T>> {
        self.check_chart(y)?;
        let d = (self.d_phi)(y);
        if d.shape() != (self.dim_ambient, self.dim_chart) {
            return Err(Error::Dimension {
                what: "embedding jacobian",
                expected: self.dim_ambient * self.dim_chart,
                got: d.len(),
            });
        }
        Ok(d)
    }

    /// `r` Hessians `∂²φ^γ/∂y^a∂y^b`, each `n×n`.
    pub fn d2_phi(&self, y: &DVector<T>) -> Result<Vec<DMatrix<T>>> {
        self.check_chart(y)?;
        let d2 = (self.d2_phi)(y);
        if d2.len() != self.dim_ambient
            || d2.iter().any(|h| h.shape() != (self.dim_chart, self.dim_chart))
        {
            return Err(Error::Dimension {
                what: "embedding hessians",
                expected: self.dim_ambient,
                got: d2.len(),
            });
        }
        Ok(d2)
    }

    /// `Σ_γ (∂²φ^γ)(u, w) e_γ` as an ambient vector.
    pub fn second_derivative_along(&self, y: &DVector<T>, u: &DVector<T>, w: &DVector<T>) -> Result<DVector<T>> {
        let d2 = self.d2_phi(y)?;
        Ok(DVector::from_iterator(
            self.dim_ambient,
            d2.iter().map(|h| u.dot(&(h * w))),
        ))
    }

    /// The unit circle `θ ↦ (cos θ, sin θ)`.
    pub fn unit_circle() -> Self {
        Self::new(
            1,
            2,
            |y: &DVector<T>| DVector::from_vec(vec![y[0].cos(), y[0].sin()]),
            |y: &DVector<T>| DMatrix::from_column_slice(2, 1, &[-y[0].sin(), y[0].cos()]),
            |y: &DVector<T>| {
                vec![
                    DMatrix::from_element(1, 1, -y[0].cos()),
                    DMatrix::from_element(1, 1, -y[0].sin()),
                ]
            },
        )
        .expect("valid dimensions")
    }

    /// Linear embedding `y ↦ M y + c` (an isometry when `M` has orthonormal columns).
    pub fn linear(matrix: DMatrix<T>, offset: DVector<T>) -> Result<Self> {
        let (r, n) = matrix.shape();
        if offset.len() != r {
            return Err(Error::Dimension {
                what: "linear embedding offset",
                expected: r,
                got: offset.len(),
            });
        }
        let m1 = matrix.clone();
        let m2 = matrix;
        Self::new(
            n,
            r,
            move |y: &DVector<T>| &m1 * y + &offset,
            move |_y: &DVector<T>| m2.clone(),
            move |_y: &DVector<T>| vec![DMatrix::zeros(n, n); r],
        )
    }

    /// The standard flat embedding `ℝⁿ → ℝʳ`, `y ↦ (y, 0)`.
    pub fn flat(n: usize, r: usize) -> Result<Self> {
        let mut m = DMatrix::zeros(r, n);
        for i in 0..n.min(r) {
            m[(i, i)] = T::one();
        }
        Self::linear(m, DVector::zeros(r))
    }

    /// The parabola `x ↦ (x, x²/2)`.
    pub fn parabola() -> Self {
        Self::new(
            1,
            2,
            |y: &DVector<T>| DVector::from_vec(vec![y[0], y[0] * y[0] * lit(0.5)]),
            |y: &DVector<T>| DMatrix::from_column_slice(2, 1, &[T::one(), y[0]]),
            |_y: &DVector<T>| vec![DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, T::one())],
        )
        .expect("valid dimensions")
    }

    /// The twisted cubic `t ↦ (t, t², t³)` in `ℝ³`.
    pub fn twisted_cubic() -> Self {
        Self::new(
            1,
            3,
            |y: &DVector<T>| {
                let t = y[0];
                DVector::from_vec(vec![t, t * t, t * t * t])
            },
            |y: &DVector<T>| {
                let t = y[0];
                DMatrix::from_column_slice(3, 1, &[T::one(), lit::<T>(2.0) * t, lit::<T>(3.0) * t * t])
            },
            |y: &DVector<T>| {
                vec![
                    DMatrix::zeros(1, 1),
                    DMatrix::from_element(1, 1, lit(2.0)),
                    DMatrix::from_element(1, 1, lit::<T>(6.0) * y[0]),
                ]
            },
        )
        .expect("valid dimensions")
    }

    /// The unit sphere in spherical coordinates `(ϑ, ϕ) ↦ (sin ϑ cos ϕ, sin ϑ sin ϕ, cos ϑ)`.
    pub fn unit_sphere() -> Self {
        Self::new(
            2,
            3,
            |y: &DVector<T>| {
                let (th, ph) = (y[0], y[1]);
                DVector::from_vec(vec![th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()])
            },
            |y: &DVector<T>| {
                let (th, ph) = (y[0], y[1]);
                DMatrix::from_row_slice(
                    3,
                    2,
                    &[
                        th.cos() * ph.cos(),
                        -th.sin() * ph.sin(),
                        th.cos() * ph.sin(),
                        th.sin() * ph.cos(),
                        -th.sin(),
                        T::zero(),
                    ],
                )
            },
            |y: &DVector<T>| {
                let (th, ph) = (y[0], y[1]);
                let (st, ct, sp, cp) = (th.sin(), th.cos(), ph.sin(), ph.cos());
                vec![
                    DMatrix::from_row_slice(2, 2, &[-st * cp, -ct * sp, -ct * sp, -st * cp]),
                    DMatrix::from_row_slice(2, 2, &[-st * sp, ct * cp, ct * cp, -st * sp]),
                    DMatrix::from_row_slice(2, 2, &[-ct, T::zero(), T::zero(), T::zero()]),
                ]
            },
        )
        .expect("valid dimensions")
    }
}

fn smallest_singular_value<T: Scalar>(d: &DMatrix<T>) -> T {
    d.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(T::max_value().unwrap_or_else(T::one), |a, b| a.min(b))
}

/// Metric `h_ab = Σ_γ ∂_a φ^γ ∂_b φ^γ` and its inverse.
pub fn induced_metric<T: Scalar>(emb: &Embedding<T>, y: &DVector<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let d = emb.d_phi(y)?;
    metric_from_jacobian(&d)
}

fn metric_from_jacobian<T: Scalar>(d: &DMatrix<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let smin = smallest_singular_value(d);
    if !(smin > lit::<T>(IMMERSION_TOLERANCE)) {
        return Err(Error::SingularMetric {
            min_singular: smin.to_f64_lossy(),
        });
    }
    let h = d.transpose() * d;
    let h = (&h + h.transpose()) * lit::<T>(0.5);
    let chol = h.clone().cholesky().ok_or(Error::SingularMetric {
        min_singular: smin.to_f64_lossy(),
    })?;
    let inv = chol.inverse();
    let inv = (&inv + inv.transpose()) * lit::<T>(0.5);
    Ok((h, inv))
}

/// Chart components of the orthogonal tangent projection, `Π = h⁻¹ dφᵀ` (`n×r`).
pub fn tangent_projection<T: Scalar>(emb: &Embedding<T>, y: &DVector<T>) -> Result<DMatrix<T>> {
    let d = emb.d_phi(y)?;
    let (_, h_inv) = metric_from_jacobian(&d)?;
    Ok(h_inv * d.transpose())
}

/// Second-order jet of `Π̃ˢ = ψ ∘ Πˢ` at `φ(y)`:
/// `Π̃ˢ(φ(y) + v) = y + Π v + ½ H(v, v) + O(|v|³)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionJet<T: Scalar> {
    pub base_chart_point: DVector<T>,
    /// `n×r` tangent projection.
    pub tangent_proj: DMatrix<T>,
    /// One symmetric `r×r` matrix per chart component.
    pub hessian: Vec<DMatrix<T>>,
}

impl<T: Scalar> ProjectionJet<T> {
    /// `H(u, w)` as a chart vector.
    pub fn hessian_form(&self, u: &DVector<T>, w: &DVector<T>) -> DVector<T> {
        DVector::from_iterator(self.hessian.len(), self.hessian.iter().map(|h| u.dot(&(h * w))))
    }

    /// Second-order prediction of the nearest-point projection of `φ(y) + v`.
    pub fn apply(&self, v: &DVector<T>) -> DVector<T> {
        &self.base_chart_point + &self.tangent_proj * v + self.hessian_form(v, v) * lit::<T>(0.5)
    }
}

/// Orthonormal adapted frame at a chart point.
///
/// `chart_map` (`J`, `n×n`) is the inverse symmetric square root of `h`, so the
/// columns of `dφ·J` are orthonormal. `ambient_rotation` (`T`, `r×r`) is
/// orthogonal with `T·dφ·J = [I; 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedFrame<T: Scalar> {
    pub chart_map: DMatrix<T>,
    pub ambient_rotation: DMatrix<T>,
}

pub fn adapted_frame<T: Scalar>(emb: &Embedding<T>, y: &DVector<T>) -> Result<AdaptedFrame<T>> {
    let d = emb.d_phi(y)?;
    let (h, _) = metric_from_jacobian(&d)?;
    let (n, r) = (emb.dim_chart(), emb.dim_ambient());

    let eig = SymmetricEigen::new(h);
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| T::one() / l.sqrt()));
    let j = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
    let j = (&j + j.transpose()) * lit::<T>(0.5);

    let tangent = &d * &j;
    let mut rot = DMatrix::zeros(r, r);
    for a in 0..n {
        rot.set_row(a, &tangent.column(a).transpose());
    }
    if r > n {
        let normal = DMatrix::<T>::identity(r, r) - &tangent * tangent.transpose();
        let q = normal.col_piv_qr().q();
        for k in 0..(r - n) {
            let mut col: DVector<T> = q.column(k).into_owned();
            // Re-orthogonalise against the tangent frame, then fix the sign so
            // the largest-magnitude entry is positive.
            for a in 0..n {
                let ta = tangent.column(a);
                let c = ta.dot(&col);
                col -= ta * c;
            }
            for prev in 0..k {
                let p = rot.row(n + prev).transpose();
                let c = p.dot(&col);
                col -= p * c;
            }
            let norm = col.norm();
            col /= norm;
            let imax = col.iamax();
            if col[imax] < T::zero() {
                col = -col;
            }
            rot.set_row(n + k, &col.transpose());
        }
    }
    Ok(AdaptedFrame {
        chart_map: j,
        ambient_rotation: rot,
    })
}

/// Second-order metric projection jet via adapted coordinates.
///
/// With `Φ = T ∘ φ ∘ J` the embedding has `dΦ = [I; 0]` at the base point and
/// the nearest-point map is, to second order,
/// `Π'(Y)^a = Y^a − ½ ∂²Φ^a(Y_∥, Y_∥) + Σ_{γ>n} ∂_a∂_β Φ^γ Y^γ Y^β`.
/// The chart jet is recovered as `Π̃ˢ(φ(y) + v) = y + J Π'(T v)`.
pub fn metric_projection_jet2<T: Scalar>(emb: &Embedding<T>, y: &DVector<T>) -> Result<ProjectionJet<T>> {
    let (n, r) = (emb.dim_chart(), emb.dim_ambient());
    let frame = adapted_frame(emb, y)?;
    let j = &frame.chart_map;
    let rot = &frame.ambient_rotation;
    let d2 = emb.d2_phi(y)?;

    // Adapted second derivatives ∂²Φ^c = Jᵀ (Σ_γ T_cγ ∂²φ^γ) J.
    let adapted: Vec<DMatrix<T>> = (0..r)
        .map(|c| {
            let mut acc = DMatrix::zeros(n, n);
            for (g, hg) in d2.iter().enumerate() {
                let w = rot[(c, g)];
                if w != T::zero() {
                    acc += hg * w;
                }
            }
            j.transpose() * acc * j
        })
        .collect();

    // Hessians of Π' in adapted ambient coordinates.
    let adapted_hessians: Vec<DMatrix<T>> = (0..n)
        .map(|a| {
            let mut m = DMatrix::zeros(r, r);
            for al in 0..n {
                for be in 0..n {
                    m[(al, be)] = -adapted[a][(al, be)];
                }
            }
            for g in n..r {
                for be in 0..n {
                    let v = adapted[g][(a, be)];
                    m[(be, g)] = v;
                    m[(g, be)] = v;
                }
            }
            m
        })
        .collect();

    let mut tangent_proj = DMatrix::zeros(n, r);
    for a in 0..n {
        for b in 0..r {
            let mut s = T::zero();
            for c in 0..n {
                s += j[(a, c)] * rot[(c, b)];
            }
            tangent_proj[(a, b)] = s;
        }
    }

    let hessian = (0..n)
        .map(|i| {
            let mut mixed = DMatrix::zeros(r, r);
            for (a, ha) in adapted_hessians.iter().enumerate() {
                let w = j[(i, a)];
                if w != T::zero() {
                    mixed += ha * w;
                }
            }
            let h = rot.transpose() * mixed * rot;
            (&h + h.transpose()) * lit::<T>(0.5)
        })
        .collect();

    Ok(ProjectionJet {
        base_chart_point: y.clone(),
        tangent_proj,
        hessian,
    })
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Independent routes to the metric projection used only by tests.
    use super::*;

    /// Direct perturbative solution of the stationarity condition
    /// `dφ(x)ᵀ (φ(y) + v − φ(x)) = 0` to second order in `v`.
    pub fn direct_second_order(emb: &Embedding<f64>, y: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let d = emb.d_phi(y).unwrap();
        let (_, h_inv) = induced_metric(emb, y).unwrap();
        let pi = &h_inv * d.transpose();
        let pv = &pi * v;
        let normal = v - &d * &pv;
        let d2 = emb.d2_phi(y).unwrap();
        let n = emb.dim_chart();
        let mut rhs = DVector::zeros(n);
        let curv = emb.second_derivative_along(y, &pv, &pv).unwrap();
        rhs -= d.transpose() * curv * 0.5;
        for a in 0..n {
            let mut s = 0.0;
            for (g, hg) in d2.iter().enumerate() {
                s += (hg.row(a) * &pv)[0] * normal[g];
            }
            rhs[a] += s;
        }
        y + pv + h_inv * rhs
    }

    /// Nearest point on the embedded manifold by damped Gauss–Newton from `start`.
    pub fn nearest_point(emb: &Embedding<f64>, z: &DVector<f64>, start: &DVector<f64>) -> DVector<f64> {
        let mut x = start.clone();
        for _ in 0..200 {
            let res = z - emb.phi(&x).unwrap();
            let d = emb.d_phi(&x).unwrap();
            let d2 = emb.d2_phi(&x).unwrap();
            let n = x.len();
            // Full Newton on f(x) = ½|z − φ(x)|².
            let grad = -(d.transpose() * &res);
            let mut hess = d.transpose() * &d;
            for a in 0..n {
                for b in 0..n {
                    let mut s = 0.0;
                    for (g, hg) in d2.iter().enumerate() {
                        s += hg[(a, b)] * res[g];
                    }
                    hess[(a, b)] -= s;
                }
            }
            let step = match hess.clone().cholesky() {
                Some(c) => c.solve(&grad),
                None => (d.transpose() * &d).cholesky().unwrap().solve(&grad),
            };
            x -= &step;
            if step.norm() < 1e-15 * (1.0 + x.norm()) {
                break;
            }
        }
        x
    }
}
