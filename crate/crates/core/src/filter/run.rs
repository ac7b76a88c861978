use crate::error::{invalid, Error, Result};
use crate::projection::{ChartCoefficients, ProjectionKind};
use crate::quadrature::GaussHermite;
use crate::scalar::{from_usize, lit, Scalar};

use super::closed_form::{closed_form_coefficients, FilterKind};
use super::gaussian::{numeric_projection_coefficients, Metric};
use super::model::{FilterModel, GaussianParams, ObservationRecord};

/// Smallest standard deviation a filter is allowed to reach.
pub const DEFAULT_THETA_MIN: f64 = 1e-3;

/// Fraction of floored steps above which a run is flagged as degenerate.
const DEGENERATE_FRACTION: f64 = 0.01;

/// Drift and `dY`-gain of a Gaussian filter in `(mean, std_dev)` coordinates.
pub trait CoefficientSource<T: Scalar>: Send + Sync {
    fn coefficients(&self, theta: &GaussianParams<T>, t: T) -> Result<ChartCoefficients<T>>;

    fn label(&self) -> String;
}

/// Closed-form coefficients for the cubic sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedForm<T: Scalar> {
    pub kind: FilterKind,
    pub eps: T,
}

impl<T: Scalar> CoefficientSource<T> for ClosedForm<T> {
    fn coefficients(&self, theta: &GaussianParams<T>, _t: T) -> Result<ChartCoefficients<T>> {
        Ok(closed_form_coefficients(self.kind, theta, self.eps))
    }

    fn label(&self) -> String {
        self.kind.to_string()
    }
}

/// Coefficients projected numerically for an arbitrary scalar model.
#[derive(Debug, Clone)]
pub struct NumericProjection<T: Scalar> {
    pub metric: Metric,
    pub kind: ProjectionKind,
    pub model: FilterModel<T>,
    pub rule: GaussHermite<T>,
}

impl<T: Scalar> NumericProjection<T> {
    pub fn new(metric: Metric, kind: ProjectionKind, model: FilterModel<T>, nodes: usize) -> Result<Self> {
        Ok(Self {
            metric,
            kind,
            model,
            rule: GaussHermite::new(nodes)?,
        })
    }
}

impl<T: Scalar> CoefficientSource<T> for NumericProjection<T> {
    fn coefficients(&self, theta: &GaussianParams<T>, t: T) -> Result<ChartCoefficients<T>> {
        numeric_projection_coefficients(self.metric, self.kind, theta, &self.model, &self.rule, t)
    }

    fn label(&self) -> String {
        format!("{}_numeric", FilterKind::from_parts(self.metric, self.kind))
    }
}

/// Parameters after each observation step, starting with the initial value.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun<T: Scalar> {
    pub thetas: Vec<GaussianParams<T>>,
    /// Steps at which the standard deviation had to be raised to the floor.
    pub floored_steps: usize,
    pub degenerate: bool,
}

/// Euler–Maruyama for `dθ = A(θ) dt + B(θ) dY` along `record`, keeping the
/// standard deviation at or above `theta_min`.
pub fn run_filter<T: Scalar>(
    source: &dyn CoefficientSource<T>,
    record: &ObservationRecord<T>,
    theta0: GaussianParams<T>,
    theta_min: T,
) -> Result<FilterRun<T>> {
    if !(theta_min > T::zero()) {
        return Err(invalid("standard deviation floor must be positive"));
    }
    let dt = record.dt;
    let mut thetas = Vec::with_capacity(record.len() + 1);
    thetas.push(theta0);
    let mut theta = theta0;
    let mut floored = 0usize;
    for (k, &dy) in record.increments.iter().enumerate() {
        let t = dt * from_usize::<T>(k);
        let c = source.coefficients(&theta, t)?;
        let mean = theta.mean + c.drift[0] * dt + c.diffusion[(0, 0)] * dy;
        let mut std_dev = theta.std_dev + c.drift[1] * dt + c.diffusion[(1, 0)] * dy;
        if !mean.is_finite() || !std_dev.is_finite() {
            return Err(Error::NumericalBlowup {
                step: k + 1,
                time: (t + dt).to_f64_lossy(),
            });
        }
        if std_dev < theta_min {
            std_dev = theta_min;
            floored += 1;
        }
        theta = GaussianParams { mean, std_dev };
        thetas.push(theta);
    }
    let degenerate = from_usize::<T>(floored) > lit::<T>(DEGENERATE_FRACTION) * from_usize::<T>(record.len());
    if degenerate {
        log::warn!(
            "filter {} floored its standard deviation on {floored} of {} steps",
            source.label(),
            record.len()
        );
    }
    Ok(FilterRun {
        thetas,
        floored_steps: floored,
        degenerate,
    })
}
