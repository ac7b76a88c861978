//! Stratonovich, Itô-vector and Itô-jet projections of an ambient SDE onto the
//! image of an embedding, expressed as SDEs in chart coordinates.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::geometry::{metric_projection_jet2, tangent_projection, Embedding};
use crate::scalar::{lit, Scalar};
use crate::sde::{ito_to_stratonovich_drift, AmbientSde, SamplePath};

/// Drift `A` and diffusion `B` (`n×m`, column `α` is `B_α`) at one chart point.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartCoefficients<T: Scalar> {
    pub drift: DVector<T>,
    pub diffusion: DMatrix<T>,
}

pub type CoefficientField<T> = Arc<dyn Fn(&DVector<T>, T) -> Result<ChartCoefficients<T>> + Send + Sync>;

/// An Itô SDE `dY = A dt + B_α dW^α` in chart coordinates.
#[derive(Clone)]
pub struct ChartSde<T: Scalar> {
    dim_chart: usize,
    dim_noise: usize,
    coefficients: CoefficientField<T>,
}

impl<T: Scalar> fmt::Debug for ChartSde<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChartSde")
            .field("dim_chart", &self.dim_chart)
            .field("dim_noise", &self.dim_noise)
            .finish()
    }
}

impl<T: Scalar> ChartSde<T> {
    pub fn new<F>(dim_chart: usize, dim_noise: usize, coefficients: F) -> Result<Self>
    where
        F: Fn(&DVector<T>, T) -> Result<ChartCoefficients<T>> + Send + Sync + 'static,
    {
        if dim_chart == 0 || dim_noise == 0 {
            return Err(invalid("chart and noise dimensions must be positive"));
        }
        Ok(Self {
            dim_chart,
            dim_noise,
            coefficients: Arc::new(coefficients),
        })
    }

    pub fn dim_chart(&self) -> usize {
        self.dim_chart
    }

    pub fn dim_noise(&self) -> usize {
        self.dim_noise
    }

    pub fn coefficients(&self, y: &DVector<T>, t: T) -> Result<ChartCoefficients<T>> {
        if y.len() != self.dim_chart {
            return Err(Error::Dimension {
                what: "chart point",
                expected: self.dim_chart,
                got: y.len(),
            });
        }
        let c = (self.coefficients)(y, t)?;
        if c.drift.len() != self.dim_chart {
            return Err(Error::Dimension {
                what: "chart drift",
                expected: self.dim_chart,
                got: c.drift.len(),
            });
        }
        if c.diffusion.shape() != (self.dim_chart, self.dim_noise) {
            return Err(Error::Dimension {
                what: "chart diffusion columns",
                expected: self.dim_noise,
                got: c.diffusion.ncols(),
            });
        }
        Ok(c)
    }

    pub fn drift(&self, y: &DVector<T>, t: T) -> Result<DVector<T>> {
        Ok(self.coefficients(y, t)?.drift)
    }

    pub fn diffusion(&self, y: &DVector<T>, t: T) -> Result<DMatrix<T>> {
        Ok(self.coefficients(y, t)?.diffusion)
    }

    /// Euler–Maruyama along prescribed `n_steps×m` Brownian increments.
    pub fn integrate_with_increments(
        &self,
        y0: &DVector<T>,
        t0: T,
        dt: T,
        increments: &DMatrix<T>,
    ) -> Result<SamplePath<T>> {
        if increments.ncols() != self.dim_noise {
            return Err(Error::Dimension {
                what: "increment columns",
                expected: self.dim_noise,
                got: increments.ncols(),
            });
        }
        let n = increments.nrows();
        let mut times = Vec::with_capacity(n + 1);
        let mut states = Vec::with_capacity(n + 1);
        times.push(t0);
        states.push(y0.clone());
        let mut y = y0.clone();
        for k in 0..n {
            let t = t0 + dt * crate::scalar::from_usize::<T>(k);
            let c = self.coefficients(&y, t)?;
            y += c.drift * dt + c.diffusion * increments.row(k).transpose();
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalBlowup {
                    step: k,
                    time: t.to_f64_lossy(),
                });
            }
            times.push(t + dt);
            states.push(y.clone());
        }
        Ok(SamplePath { times, states })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProjectionKind {
    Stratonovich,
    ItoVector,
    ItoJet,
}

impl ProjectionKind {
    pub const ALL: [ProjectionKind; 3] = [Self::Stratonovich, Self::ItoVector, Self::ItoJet];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Stratonovich => "stratonovich",
            Self::ItoVector => "ito_vector",
            Self::ItoJet => "ito_jet",
        }
    }
}

impl fmt::Display for ProjectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProjectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "stratonovich" | "strat" => Ok(Self::Stratonovich),
            "ito_vector" | "vector" | "vec" => Ok(Self::ItoVector),
            "ito_jet" | "jet" => Ok(Self::ItoJet),
            other => Err(invalid(format!("unknown projection kind '{other}'"))),
        }
    }
}

/// Controls for the Stratonovich projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StratonovichOptions {
    /// Permit finite differences when the ambient SDE has no analytic diffusion Jacobian.
    pub allow_fd_jacobian: bool,
}

impl Default for StratonovichOptions {
    fn default() -> Self {
        Self {
            allow_fd_jacobian: true,
        }
    }
}

fn ambient_at<T: Scalar>(sde: &AmbientSde<T>, emb: &Embedding<T>, y: &DVector<T>, t: T) -> Result<(DVector<T>, DVector<T>, DMatrix<T>)> {
    if sde.dim_state() != emb.dim_ambient() {
        return Err(Error::Dimension {
            what: "ambient dimension of embedding",
            expected: sde.dim_state(),
            got: emb.dim_ambient(),
        });
    }
    let x = emb.phi(y)?;
    let a = sde.drift(&x, t)?;
    let b = sde.diffusion(&x, t)?;
    Ok((x, a, b))
}

/// Itô-vector coefficients: `B = Π b`, `A = Π (a − ½ Σ_α ∂²φ(B_α, B_α))`.
pub fn ito_vector_at<T: Scalar>(sde: &AmbientSde<T>, emb: &Embedding<T>, y: &DVector<T>, t: T) -> Result<ChartCoefficients<T>> {
    let (_, a, b) = ambient_at(sde, emb, y, t)?;
    let pi = tangent_projection(emb, y)?;
    let big_b = &pi * &b;
    let mut corrected = a;
    for al in 0..big_b.ncols() {
        let col = big_b.column(al).into_owned();
        corrected -= emb.second_derivative_along(y, &col, &col)? * lit::<T>(0.5);
    }
    Ok(ChartCoefficients {
        drift: &pi * corrected,
        diffusion: big_b,
    })
}

/// Itô-jet coefficients: `B = Π b`, `A = Π a + ½ Σ_α H(b_α, b_α)` with `H` the
/// Hessian of the metric projection.
pub fn ito_jet_at<T: Scalar>(sde: &AmbientSde<T>, emb: &Embedding<T>, y: &DVector<T>, t: T) -> Result<ChartCoefficients<T>> {
    let (_, a, b) = ambient_at(sde, emb, y, t)?;
    let jet = metric_projection_jet2(emb, y)?;
    let mut drift = &jet.tangent_proj * a;
    for al in 0..b.ncols() {
        let col = b.column(al).into_owned();
        drift += jet.hessian_form(&col, &col) * lit::<T>(0.5);
    }
    Ok(ChartCoefficients {
        drift,
        diffusion: &jet.tangent_proj * b,
    })
}

/// Stratonovich coefficients in Itô form: `Ā = Π ā`, `B = Π b`,
/// `A = Ā + ½ Σ_α (∂B_α/∂y) B_α` with the chart Jacobian by central differences.
pub fn stratonovich_at<T: Scalar>(
    sde: &AmbientSde<T>,
    emb: &Embedding<T>,
    y: &DVector<T>,
    t: T,
    options: StratonovichOptions,
) -> Result<ChartCoefficients<T>> {
    if !options.allow_fd_jacobian && !sde.has_analytic_jacobian() {
        return Err(invalid(
            "Stratonovich projection needs a diffusion Jacobian and finite differences are disabled",
        ));
    }
    let (x, _, _) = ambient_at(sde, emb, y, t)?;
    let strat_drift = ito_to_stratonovich_drift(sde, &x, t)?;
    let chart_diffusion = |z: &DVector<T>| -> Result<DMatrix<T>> {
        let b = sde.diffusion(&emb.phi(z)?, t)?;
        Ok(tangent_projection(emb, z)? * b)
    };
    let pi = tangent_projection(emb, y)?;
    let big_b = chart_diffusion(y)?;
    let n = emb.dim_chart();
    let m = big_b.ncols();
    // dB[j] = ∂B/∂y^j, each n×m.
    let mut d_b = Vec::with_capacity(n);
    for j in 0..n {
        let h = T::fd_step(y[j]);
        let mut yp = y.clone();
        let mut ym = y.clone();
        yp[j] += h;
        ym[j] -= h;
        let step = yp[j] - ym[j];
        d_b.push((chart_diffusion(&yp)? - chart_diffusion(&ym)?) / step);
    }
    let mut drift = &pi * strat_drift;
    for al in 0..m {
        for j in 0..n {
            let w = big_b[(j, al)] * lit::<T>(0.5);
            for i in 0..n {
                drift[i] += d_b[j][(i, al)] * w;
            }
        }
    }
    Ok(ChartCoefficients {
        drift,
        diffusion: big_b,
    })
}

/// Coefficients of the chosen projection at a single chart point.
pub fn project_at<T: Scalar>(
    kind: ProjectionKind,
    sde: &AmbientSde<T>,
    emb: &Embedding<T>,
    y: &DVector<T>,
    t: T,
) -> Result<ChartCoefficients<T>> {
    match kind {
        ProjectionKind::Stratonovich => stratonovich_at(sde, emb, y, t, StratonovichOptions::default()),
        ProjectionKind::ItoVector => ito_vector_at(sde, emb, y, t),
        ProjectionKind::ItoJet => ito_jet_at(sde, emb, y, t),
    }
}

fn check_compatible<T: Scalar>(sde: &AmbientSde<T>, emb: &Embedding<T>) -> Result<()> {
    if sde.dim_state() != emb.dim_ambient() {
        return Err(Error::Dimension {
            what: "ambient dimension of embedding",
            expected: sde.dim_state(),
            got: emb.dim_ambient(),
        });
    }
    Ok(())
}

pub fn ito_vector_project<T: Scalar>(sde: &AmbientSde<T>, emb: &Embedding<T>) -> Result<ChartSde<T>> {
    project(ProjectionKind::ItoVector, sde, emb)
}

pub fn ito_jet_project<T: Scalar>(sde: &AmbientSde<T>, emb: &Embedding<T>) -> Result<ChartSde<T>> {
    project(ProjectionKind::ItoJet, sde, emb)
}

pub fn stratonovich_project<T: Scalar>(sde: &AmbientSde<T>, emb: &Embedding<T>) -> Result<ChartSde<T>> {
    stratonovich_project_with(sde, emb, StratonovichOptions::default())
}

pub fn stratonovich_project_with<T: Scalar>(
    sde: &AmbientSde<T>,
    emb: &Embedding<T>,
    options: StratonovichOptions,
) -> Result<ChartSde<T>> {
    check_compatible(sde, emb)?;
    if !options.allow_fd_jacobian && !sde.has_analytic_jacobian() {
        return Err(invalid(
            "Stratonovich projection needs a diffusion Jacobian and finite differences are disabled",
        ));
    }
    let (sde, emb) = (sde.clone(), emb.clone());
    ChartSde::new(emb.dim_chart(), sde.dim_noise(), move |y: &DVector<T>, t| {
        stratonovich_at(&sde, &emb, y, t, options)
    })
}

/// The chosen projection as a lazily evaluated chart SDE.
pub fn project<T: Scalar>(kind: ProjectionKind, sde: &AmbientSde<T>, emb: &Embedding<T>) -> Result<ChartSde<T>> {
    check_compatible(sde, emb)?;
    if kind == ProjectionKind::Stratonovich {
        return stratonovich_project(sde, emb);
    }
    let (sde, emb) = (sde.clone(), emb.clone());
    ChartSde::new(emb.dim_chart(), sde.dim_noise(), move |y: &DVector<T>, t| project_at(kind, &sde, &emb, y, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ito_taylor::{error_growth_coefficients, JetData};
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cross(sigma: f64) -> AmbientSde<f64> {
        AmbientSde::new(
            2,
            1,
            |_x: &DVector<f64>, _t| DVector::zeros(2),
            move |x: &DVector<f64>, _t| dmatrix![sigma * x[1]; sigma * x[0]],
        )
        .unwrap()
    }

    fn nonlinear3() -> AmbientSde<f64> {
        AmbientSde::new(
            3,
            2,
            |x: &DVector<f64>, _t| dvector![x[1] - 0.2 * x[0], x[2] * x[0], 0.3 - x[2]],
            |x: &DVector<f64>, _t| {
                dmatrix![
                    0.5 + 0.1 * x[1], 0.2 * x[2];
                    0.3 * x[0], 0.4;
                    -0.2, 0.1 * x[0] * x[1]
                ]
            },
        )
        .unwrap()
    }

    #[test]
    fn kinds_parse_and_display() {
        for k in ProjectionKind::ALL {
            assert_eq!(k.to_string().parse::<ProjectionKind>().unwrap(), k);
        }
        assert_eq!("ito-jet".parse::<ProjectionKind>().unwrap(), ProjectionKind::ItoJet);
        assert!("milstein".parse::<ProjectionKind>().is_err());
    }

    #[test]
    fn identity_embedding_returns_input() {
        let emb = Embedding::<f64>::flat(2, 2).unwrap();
        let sde = cross(0.9);
        let y = dvector![0.4, -0.7];
        let a = sde.drift(&y, 0.0).unwrap();
        let b = sde.diffusion(&y, 0.0).unwrap();
        for k in ProjectionKind::ALL {
            let c = project(k, &sde, &emb).unwrap().coefficients(&y, 0.0).unwrap();
            assert!((&c.drift - &a).amax() < 1e-9, "{k}");
            assert!((&c.diffusion - &b).amax() < 1e-14, "{k}");
        }
    }

    #[test]
    fn constant_sde_on_flat_embedding() {
        let emb = Embedding::<f64>::flat(2, 3).unwrap();
        let sde = AmbientSde::new(
            3,
            1,
            |_x: &DVector<f64>, _t| dvector![1.0, 2.0, 3.0],
            |_x: &DVector<f64>, _t| dmatrix![0.5; -0.5; 9.0],
        )
        .unwrap();
        let y = dvector![0.1, 0.2];
        for k in ProjectionKind::ALL {
            let c = project_at(k, &sde, &emb, &y, 0.0).unwrap();
            assert!((c.drift - dvector![1.0, 2.0]).amax() < 1e-12);
            assert!((c.diffusion - dmatrix![0.5; -0.5]).amax() < 1e-15);
        }
    }

    #[test]
    fn jet_equals_vector_on_flat_embedding() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 2.0, 0.7, 0.1]);
        let emb = Embedding::linear(m, dvector![0.0, 1.0, 0.0]).unwrap();
        let sde = nonlinear3();
        let y = dvector![0.2, 0.5];
        let v = ito_vector_at(&sde, &emb, &y, 0.0).unwrap();
        let j = ito_jet_at(&sde, &emb, &y, 0.0).unwrap();
        assert!((v.drift - j.drift).amax() < 1e-12);
        assert!((v.diffusion - j.diffusion).amax() < 1e-14);
    }

    #[test]
    fn cross_diffusion_on_circle() {
        let emb = Embedding::<f64>::unit_circle();
        let sigma = 1.3;
        let sde = cross(sigma);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let th: f64 = rng.random_range(-3.2..3.2);
            let y = dvector![th];
            let exact_drift = -0.5 * sigma * sigma * (4.0 * th).sin();
            let exact_diff = sigma * (2.0 * th).cos();
            let v = ito_vector_at(&sde, &emb, &y, 0.0).unwrap();
            let j = ito_jet_at(&sde, &emb, &y, 0.0).unwrap();
            let s = stratonovich_at(&sde, &emb, &y, 0.0, StratonovichOptions::default()).unwrap();
            assert!(v.drift[0].abs() < 1e-12);
            assert_relative_eq!(j.drift[0], exact_drift, epsilon = 1e-12);
            assert_relative_eq!(s.drift[0], exact_drift, epsilon = 1e-8);
            for c in [&v, &j, &s] {
                assert_relative_eq!(c.diffusion[(0, 0)], exact_diff, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn diffusions_agree_across_kinds() {
        let emb = Embedding::<f64>::unit_sphere();
        let sde = nonlinear3();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let y = dvector![rng.random_range(0.3..2.8), rng.random_range(-3.0..3.0)];
            let v = ito_vector_at(&sde, &emb, &y, 0.0).unwrap();
            let j = ito_jet_at(&sde, &emb, &y, 0.0).unwrap();
            let s = stratonovich_at(&sde, &emb, &y, 0.0, StratonovichOptions::default()).unwrap();
            assert!((&v.diffusion - &j.diffusion).amax() < 1e-10);
            assert!((&v.diffusion - &s.diffusion).amax() < 1e-10);
        }
    }

    #[test]
    fn stratonovich_without_jacobian_can_be_refused() {
        let emb = Embedding::<f64>::unit_circle();
        let opts = StratonovichOptions {
            allow_fd_jacobian: false,
        };
        assert!(stratonovich_project_with(&cross(1.0), &emb, opts).is_err());
        let with_jac = cross(1.0).with_diffusion_jacobian(|_x: &DVector<f64>, _t| vec![dmatrix![0.0, 1.0; 1.0, 0.0]]);
        let p = stratonovich_project_with(&with_jac, &emb, opts).unwrap();
        assert!(p.coefficients(&dvector![0.3], 0.0).is_ok());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let emb = Embedding::<f64>::unit_sphere();
        for k in ProjectionKind::ALL {
            assert!(project(k, &cross(1.0), &emb).is_err());
        }
        let p = ito_vector_project(&cross(1.0), &Embedding::unit_circle()).unwrap();
        assert!(p.coefficients(&dvector![0.1, 0.2], 0.0).is_err());
    }

    #[test]
    fn vector_drift_minimises_drift_error_growth() {
        let emb = Embedding::<f64>::unit_circle();
        let sde = AmbientSde::new(
            2,
            1,
            |x: &DVector<f64>, _t| dvector![0.4 - 0.3 * x[1], 0.2 + 0.5 * x[0]],
            |x: &DVector<f64>, _t| dmatrix![0.6 + 0.2 * x[1]; 0.3 - 0.4 * x[0]],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let y = dvector![rng.random_range(-3.0..3.0)];
            let x = emb.phi(&y).unwrap();
            let c = ito_vector_at(&sde, &emb, &y, 0.0).unwrap();
            let a = sde.drift(&x, 0.0).unwrap();
            let b = sde.diffusion(&x, 0.0).unwrap();
            let f = JetData::identity(&x);
            let big_f = JetData::from_embedding(&emb, &y).unwrap();
            let cell = 1e-3;
            let best = (-2000..=2000)
                .map(|k| k as f64 * cell)
                .min_by(|p, q| {
                    let cp = error_growth_coefficients(&f, &big_f, (&a, &b), (&dvector![*p], &c.diffusion)).unwrap();
                    let cq = error_growth_coefficients(&f, &big_f, (&a, &b), (&dvector![*q], &c.diffusion)).unwrap();
                    cp.first_order_drift.partial_cmp(&cq.first_order_drift).unwrap()
                })
                .unwrap();
            assert!((best - c.drift[0]).abs() <= cell);
        }
    }

    #[test]
    fn chart_integration_follows_coefficients() {
        let p = ChartSde::new(1, 1, |y: &DVector<f64>, _t| {
            Ok(ChartCoefficients {
                drift: -y,
                diffusion: dmatrix![0.0],
            })
        })
        .unwrap();
        let inc = DMatrix::zeros(1000, 1);
        let path = p.integrate_with_increments(&dvector![1.0], 0.0, 1e-3, &inc).unwrap();
        assert_eq!(path.len(), 1001);
        assert!((path.terminal()[0] - (-1f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn f32_projection_builds() {
        let emb = Embedding::<f32>::unit_circle();
        let sde = AmbientSde::<f32>::new(
            2,
            1,
            |_x: &DVector<f32>, _t| DVector::zeros(2),
            |x: &DVector<f32>, _t| DMatrix::from_column_slice(2, 1, &[x[1], x[0]]),
        )
        .unwrap();
        let c = ito_jet_at(&sde, &emb, &DVector::from_element(1, 0.3f32), 0.0).unwrap();
        assert!((c.drift[0] + 0.5 * (1.2f32).sin()).abs() < 1e-5);
    }
}
