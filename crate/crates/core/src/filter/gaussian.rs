use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::geometry::Embedding;
use crate::projection::{project_at, ChartCoefficients, ProjectionKind};
use crate::quadrature::GaussHermite;
use crate::scalar::{lit, Scalar};
use crate::sde::AmbientSde;

use super::model::{FilterModel, GaussianParams};

pub const DEFAULT_QUADRATURE_NODES: usize = 40;
pub const MIN_QUADRATURE_NODES: usize = 20;

/// Function-space geometry used to embed densities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    /// Densities `p` in `L²`.
    L2,
    /// Square roots `√p` in `L²`.
    Hellinger,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::L2, Metric::Hellinger];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::L2 => "l2",
            Self::Hellinger => "hellinger",
        }
    }

    /// `(K, k, λ)` with the embedded function `K s^{−k} exp(−(x − m)²/(2λ s²))`.
    fn profile<T: Scalar>(self) -> (T, T, T) {
        match self {
            Self::L2 => (T::one() / T::two_pi().sqrt(), T::one(), T::one()),
            Self::Hellinger => (T::one() / T::two_pi().sqrt().sqrt(), lit(0.5), lit(2.0)),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l2" => Ok(Self::L2),
            "hellinger" | "h" => Ok(Self::Hellinger),
            other => Err(invalid(format!("unknown metric '{other}'"))),
        }
    }
}

/// The Gaussian family sampled at fixed quadrature nodes.
///
/// A function `g` is represented by `v_k = √ω_k g(x_k)`, so that the Euclidean
/// inner product of representations approximates the `L²` inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFamily<T: Scalar> {
    metric: Metric,
    nodes: Vec<T>,
    weights: Vec<T>,
    sqrt_weights: Vec<T>,
}

impl<T: Scalar> GaussianFamily<T> {
    /// Nodes of `rule` centred and scaled at `base`.
    pub fn new(metric: Metric, base: &GaussianParams<T>, rule: &GaussHermite<T>) -> Result<Self> {
        if rule.len() < MIN_QUADRATURE_NODES {
            return Err(invalid(format!(
                "quadrature needs at least {MIN_QUADRATURE_NODES} nodes (got {})",
                rule.len()
            )));
        }
        let (nodes, weights) = rule.shifted(base.mean, base.std_dev);
        if weights.iter().any(|w| !w.is_finite() || *w <= T::zero()) {
            return Err(Error::DegenerateState("quadrature weights overflowed".into()));
        }
        let sqrt_weights = weights.iter().map(|w| w.sqrt()).collect();
        Ok(Self {
            metric,
            nodes,
            weights,
            sqrt_weights,
        })
    }

    pub fn metric(&self) -> Metric {
        self.metric
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

    /// Embedded function value at each node, without the `√ω` factor.
    fn values(&self, theta: &DVector<T>) -> Vec<T> {
        let (big_k, k, lambda) = self.metric.profile::<T>();
        let (m, s) = (theta[0], theta[1]);
        let scale = big_k * s.powf(-k);
        self.nodes
            .iter()
            .map(|&x| {
                let d = x - m;
                scale * (-d * d / (lit::<T>(2.0) * lambda * s * s)).exp()
            })
            .collect()
    }

    pub fn embed(&self, theta: &DVector<T>) -> DVector<T> {
        let f = self.values(theta);
        DVector::from_iterator(self.len(), f.iter().zip(&self.sqrt_weights).map(|(v, w)| *v * *w))
    }

    /// `N×2` Jacobian with respect to `(mean, std_dev)`.
    pub fn tangent(&self, theta: &DVector<T>) -> DMatrix<T> {
        let (_, k, lambda) = self.metric.profile::<T>();
        let (m, s) = (theta[0], theta[1]);
        let f = self.values(theta);
        let mut out = DMatrix::zeros(self.len(), 2);
        for i in 0..self.len() {
            let d = self.nodes[i] - m;
            let fw = f[i] * self.sqrt_weights[i];
            out[(i, 0)] = fw * d / (lambda * s * s);
            out[(i, 1)] = fw * (-k / s + d * d / (lambda * s * s * s));
        }
        out
    }

    /// One `2×2` Hessian per node.
    pub fn hessians(&self, theta: &DVector<T>) -> Vec<DMatrix<T>> {
        let (_, k, lambda) = self.metric.profile::<T>();
        let (m, s) = (theta[0], theta[1]);
        let f = self.values(theta);
        let ls2 = lambda * s * s;
        (0..self.len())
            .map(|i| {
                let d = self.nodes[i] - m;
                let fw = f[i] * self.sqrt_weights[i];
                let gm = d / ls2;
                let gs = -k / s + d * d / (ls2 * s);
                let mm = fw * (gm * gm - T::one() / ls2);
                let ms = fw * (gm * gs - lit::<T>(2.0) * d / (ls2 * s));
                let ss = fw * (gs * gs + k / (s * s) - lit::<T>(3.0) * d * d / (ls2 * s * s));
                DMatrix::from_row_slice(2, 2, &[mm, ms, ms, ss])
            })
            .collect()
    }

    /// Node masses `ω_k p(x_k)` of the density represented by `v`.
    fn node_masses(&self, v: &DVector<T>) -> Vec<T> {
        match self.metric {
            Metric::L2 => v.iter().zip(&self.sqrt_weights).map(|(a, w)| *a * *w).collect(),
            Metric::Hellinger => v.iter().map(|a| *a * *a).collect(),
        }
    }

    /// Gaussian with the mean and variance of the density represented by `v`.
    pub fn moment_fit(&self, v: &DVector<T>) -> Result<GaussianParams<T>> {
        let w = self.node_masses(v);
        let mass = w.iter().fold(T::zero(), |a, b| a + *b);
        if !(mass > T::zero()) {
            return Err(Error::DegenerateState(format!("represented density has mass {mass:?}")));
        }
        let mean = w.iter().zip(&self.nodes).fold(T::zero(), |a, (p, x)| a + *p * *x) / mass;
        let var = w
            .iter()
            .zip(&self.nodes)
            .fold(T::zero(), |a, (p, x)| a + *p * (*x - mean) * (*x - mean))
            / mass;
        GaussianParams::new(mean, var.sqrt()).map_err(|_| Error::DegenerateState(format!("represented density has variance {var:?}")))
    }

    /// `E_p[b]` for the density represented by `v`.
    fn expectation(&self, v: &DVector<T>, b: &[T]) -> T {
        self.node_masses(v).iter().zip(b).fold(T::zero(), |a, (p, bk)| a + *p * *bk)
    }
}

/// The family as an embedding of the `(mean, std_dev)` chart.
pub fn gaussian_family_embedding<T: Scalar>(family: &GaussianFamily<T>) -> Result<Embedding<T>> {
    let (f1, f2, f3) = (family.clone(), family.clone(), family.clone());
    Embedding::new(
        2,
        family.len(),
        move |y: &DVector<T>| f1.embed(y),
        move |y: &DVector<T>| f2.tangent(y),
        move |y: &DVector<T>| f3.hessians(y),
    )
}

/// The Kushner–Stratonovich equation in the family's ambient coordinates,
/// driven by the observation `dY` as a single noise.
///
/// The diffusion is `p(b − E_p b)` for `L²` and `½√p(b − E_p b)` for
/// Hellinger. The drift is evaluated in closed form at the moment-matched
/// Gaussian, which is exact on the family.
pub fn gaussian_family_sde<T: Scalar>(family: &GaussianFamily<T>, model: &FilterModel<T>) -> Result<AmbientSde<T>> {
    let n = family.len();
    let metric = family.metric;
    let observations = |fam: &GaussianFamily<T>, model: &FilterModel<T>, t: T| -> Vec<T> {
        fam.nodes.iter().map(|&x| model.observation(x, t)).collect()
    };
    let half = lit::<T>(0.5);

    let (fam, mdl) = (family.clone(), model.clone());
    let drift = move |v: &DVector<T>, t: T| -> DVector<T> {
        let theta = match fam.moment_fit(v) {
            Ok(th) => th,
            Err(_) => return DVector::from_element(n, lit::<T>(f64::NAN)),
        };
        let b = observations(&fam, &mdl, t);
        let e = fam.expectation(v, &b);
        let (m, s) = (theta.mean, theta.std_dev);
        let s2 = s * s;
        DVector::from_iterator(
            n,
            (0..n).map(|k| {
                let x = fam.nodes[k];
                let d = x - m;
                // L*p / p for the Gaussian p.
                let forward = half
                    * (mdl.diffusion_sq_dxx(x, t) - lit::<T>(2.0) * mdl.diffusion_sq_dx(x, t) * d / s2
                        + mdl.diffusion_sq(x, t) * (d * d / (s2 * s2) - T::one() / s2))
                    - (mdl.drift_dx(x, t) - mdl.drift(x, t) * d / s2);
                let c = b[k] - e;
                let p = theta.density(x);
                let mu = match metric {
                    Metric::L2 => p * (forward - c * e),
                    Metric::Hellinger => p.sqrt() * (half * forward - lit::<T>(0.125) * c * (b[k] + lit::<T>(3.0) * e)),
                };
                fam.sqrt_weights[k] * mu
            }),
        )
    };

    let (fam, mdl) = (family.clone(), model.clone());
    let diffusion = move |v: &DVector<T>, t: T| -> DMatrix<T> {
        let b = observations(&fam, &mdl, t);
        let e = fam.expectation(v, &b);
        let scale = match metric {
            Metric::L2 => T::one(),
            Metric::Hellinger => half,
        };
        DMatrix::from_iterator(n, 1, (0..n).map(|k| scale * v[k] * (b[k] - e)))
    };

    let (fam, mdl) = (family.clone(), model.clone());
    let jacobian = move |v: &DVector<T>, t: T| -> Vec<DMatrix<T>> {
        let b = observations(&fam, &mdl, t);
        let e = fam.expectation(v, &b);
        let mut jac = DMatrix::zeros(n, n);
        for k in 0..n {
            for j in 0..n {
                jac[(k, j)] = match metric {
                    Metric::L2 => -v[k] * fam.sqrt_weights[j] * b[j],
                    Metric::Hellinger => -v[k] * v[j] * b[j],
                };
            }
            jac[(k, k)] += match metric {
                Metric::L2 => b[k] - e,
                Metric::Hellinger => half * (b[k] - e),
            };
        }
        vec![jac]
    };

    Ok(AmbientSde::new(n, 1, drift, diffusion)?.with_diffusion_jacobian(jacobian))
}

/// Projected filter coefficients at `theta`, computed numerically with
/// quadrature nodes centred at `theta`.
pub fn numeric_projection_coefficients<T: Scalar>(
    metric: Metric,
    kind: ProjectionKind,
    theta: &GaussianParams<T>,
    model: &FilterModel<T>,
    rule: &GaussHermite<T>,
    t: T,
) -> Result<ChartCoefficients<T>> {
    let family = GaussianFamily::new(metric, theta, rule)?;
    let emb = gaussian_family_embedding(&family)?;
    let sde = gaussian_family_sde(&family, model)?;
    let coeffs = project_at(kind, &sde, &emb, &theta.to_vector(), t)?;
    if coeffs.drift.iter().chain(coeffs.diffusion.iter()).any(|c| !c.is_finite()) {
        return Err(Error::DegenerateState(format!(
            "non-finite projected coefficients at mean {:?}, std_dev {:?}",
            theta.mean, theta.std_dev
        )));
    }
    Ok(coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::closed_form::{closed_form_coefficients, FilterKind};
    use crate::geometry::induced_metric;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn rule() -> GaussHermite<f64> {
        GaussHermite::new(DEFAULT_QUADRATURE_NODES).unwrap()
    }

    fn th(m: f64, s: f64) -> GaussianParams<f64> {
        GaussianParams::new(m, s).unwrap()
    }

    #[test]
    fn metric_parsing() {
        for m in Metric::ALL {
            assert_eq!(m.as_str().parse::<Metric>().unwrap(), m);
        }
        assert!("fisher".parse::<Metric>().is_err());
    }

    #[test]
    fn too_few_nodes_rejected() {
        let r = GaussHermite::new(10).unwrap();
        assert!(GaussianFamily::new(Metric::L2, &th(0.0, 1.0), &r).is_err());
    }

    #[test]
    fn l2_metric_at_unit_scale() {
        let fam = GaussianFamily::new(Metric::L2, &th(0.3, 1.0), &rule()).unwrap();
        let emb = gaussian_family_embedding(&fam).unwrap();
        let (h, _) = induced_metric(&emb, &DVector::from_vec(vec![0.3, 1.0])).unwrap();
        let c = 1.0 / (4.0 * PI.sqrt());
        assert_relative_eq!(h[(0, 0)], c, epsilon = 1e-12);
        assert_relative_eq!(h[(1, 1)], 1.5 * c, epsilon = 1e-12);
        assert!(h[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn hellinger_metric_is_quarter_fisher() {
        for s in [0.5, 1.0, 2.0] {
            let fam = GaussianFamily::new(Metric::Hellinger, &th(-0.4, s), &rule()).unwrap();
            let emb = gaussian_family_embedding(&fam).unwrap();
            let (h, _) = induced_metric(&emb, &DVector::from_vec(vec![-0.4, s])).unwrap();
            assert_relative_eq!(h[(0, 0)], 1.0 / (4.0 * s * s), epsilon = 1e-12);
            assert_relative_eq!(h[(1, 1)], 2.0 / (4.0 * s * s), epsilon = 1e-12);
            assert!(h[(0, 1)].abs() < 1e-12);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for metric in Metric::ALL {
            let fam = GaussianFamily::new(metric, &th(0.2, 0.8), &rule()).unwrap();
            let y = DVector::from_vec(vec![0.25, 0.75]);
            let jac = fam.tangent(&y);
            let hes = fam.hessians(&y);
            let h = 1e-5;
            for a in 0..2 {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[a] += h;
                ym[a] -= h;
                let fd = (fam.embed(&yp) - fam.embed(&ym)) / (2.0 * h);
                assert!((fd - jac.column(a)).amax() < 1e-8);
                let fd2 = (fam.tangent(&yp) - fam.tangent(&ym)) / (2.0 * h);
                for (k, hk) in hes.iter().enumerate() {
                    for b in 0..2 {
                        assert!((fd2[(k, b)] - hk[(a, b)]).abs() < 1e-7);
                    }
                }
            }
        }
    }

    #[test]
    fn moment_fit_recovers_parameters() {
        for metric in Metric::ALL {
            let fam = GaussianFamily::new(metric, &th(0.0, 1.0), &rule()).unwrap();
            let t = th(0.3, 1.2);
            let fit = fam.moment_fit(&fam.embed(&t.to_vector())).unwrap();
            assert_relative_eq!(fit.mean, 0.3, epsilon = 1e-10);
            assert_relative_eq!(fit.std_dev, 1.2, epsilon = 1e-10);
        }
    }

    #[test]
    fn diffusion_jacobian_matches_finite_differences() {
        let model = FilterModel::cubic_sensor(0.1);
        for metric in Metric::ALL {
            let fam = GaussianFamily::new(metric, &th(0.1, 0.9), &rule()).unwrap();
            let sde = gaussian_family_sde(&fam, &model).unwrap();
            let v = fam.embed(&DVector::from_vec(vec![0.1, 0.9]));
            let an = sde.analytic_diffusion_jacobian(&v, 0.0).unwrap().unwrap();
            let fd = sde.fd_diffusion_jacobian(&v, 0.0).unwrap();
            assert!((&an[0] - &fd[0]).amax() < 1e-8);
        }
    }

    #[test]
    fn numeric_matches_closed_forms() {
        let eps = 0.05;
        let model = FilterModel::cubic_sensor(eps);
        let r = rule();
        for metric in Metric::ALL {
            for kind in ProjectionKind::ALL {
                let fk = FilterKind::from_parts(metric, kind);
                for i in 0..5 {
                    for j in 0..5 {
                        let t = th(-1.0 + 0.5 * i as f64, 0.5 + 0.25 * j as f64);
                        let num = numeric_projection_coefficients(metric, kind, &t, &model, &r, 0.0).unwrap();
                        let cf = closed_form_coefficients(fk, &t, eps);
                        let scale = cf.drift.amax().max(cf.diffusion.amax());
                        let err = (&num.drift - &cf.drift).amax().max((&num.diffusion - &cf.diffusion).amax());
                        assert!(err <= 1e-5 * scale, "{fk} at {t:?}: {err} vs {scale}");
                    }
                }
            }
        }
    }

    #[test]
    fn diffusion_is_shared_across_projections() {
        let model = FilterModel::cubic_sensor(0.2);
        let r = rule();
        let t = th(0.6, 0.7);
        for metric in Metric::ALL {
            let d: Vec<_> = ProjectionKind::ALL
                .iter()
                .map(|&k| numeric_projection_coefficients(metric, k, &t, &model, &r, 0.0).unwrap().diffusion)
                .collect();
            assert!((&d[0] - &d[1]).amax() < 1e-8);
            assert!((&d[0] - &d[2]).amax() < 1e-8);
        }
    }
}
