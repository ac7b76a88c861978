use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::scalar::{from_usize, lit, Scalar};
use crate::sde::{brownian_increments, euler_maruyama_with_increments, AmbientSde, NoiseSource, SamplePath};

pub type ScalarField<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;

/// Signal `dX = f(X, t) dt + σ(X, t) dW`, observation `dY = b(X, t) dt + dV`.
///
/// The squared diffusion `σ²` is stored with its first two `x`-derivatives,
/// and the drift with its first, so the forward operator
/// `L*p = ½ (σ² p)'' − (f p)'` can be applied to closed-form densities.
#[derive(Clone)]
pub struct FilterModel<T: Scalar> {
    drift: ScalarField<T>,
    drift_dx: ScalarField<T>,
    diffusion_sq: ScalarField<T>,
    diffusion_sq_dx: ScalarField<T>,
    diffusion_sq_dxx: ScalarField<T>,
    observation: ScalarField<T>,
    cubic_epsilon: Option<T>,
}

impl<T: Scalar> fmt::Debug for FilterModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FilterModel")
            .field("cubic_epsilon", &self.cubic_epsilon)
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> FilterModel<T> {
    /// `[f, f', σ², (σ²)', (σ²)'', b]`, each a function of `(x, t)`.
    pub fn new(fields: [ScalarField<T>; 6]) -> Self {
        let [drift, drift_dx, diffusion_sq, diffusion_sq_dx, diffusion_sq_dxx, observation] = fields;
        Self {
            drift,
            drift_dx,
            diffusion_sq,
            diffusion_sq_dx,
            diffusion_sq_dxx,
            observation,
            cubic_epsilon: None,
        }
    }

    /// `f = 0`, `σ = 1`, `b(x) = x + εx³`.
    pub fn cubic_sensor(eps: T) -> Self {
        let zero: ScalarField<T> = Arc::new(|_x, _t| T::zero());
        Self {
            drift: zero.clone(),
            drift_dx: zero.clone(),
            diffusion_sq: Arc::new(|_x, _t| T::one()),
            diffusion_sq_dx: zero.clone(),
            diffusion_sq_dxx: zero,
            observation: Arc::new(move |x, _t| x + eps * x * x * x),
            cubic_epsilon: Some(eps),
        }
    }

    /// The cubic-sensor parameter `ε`, when this is a cubic sensor.
    pub fn cubic_epsilon(&self) -> Option<T> {
        self.cubic_epsilon
    }

    pub fn drift(&self, x: T, t: T) -> T {
        (self.drift)(x, t)
    }

    pub fn drift_dx(&self, x: T, t: T) -> T {
        (self.drift_dx)(x, t)
    }

    pub fn diffusion_sq(&self, x: T, t: T) -> T {
        (self.diffusion_sq)(x, t)
    }

    pub fn diffusion_sq_dx(&self, x: T, t: T) -> T {
        (self.diffusion_sq_dx)(x, t)
    }

    pub fn diffusion_sq_dxx(&self, x: T, t: T) -> T {
        (self.diffusion_sq_dxx)(x, t)
    }

    pub fn observation(&self, x: T, t: T) -> T {
        (self.observation)(x, t)
    }

    /// The signal as a one-dimensional ambient SDE.
    pub fn signal_sde(&self) -> AmbientSde<T> {
        let drift = self.drift.clone();
        let sq = self.diffusion_sq.clone();
        AmbientSde::new(
            1,
            1,
            move |x: &DVector<T>, t| DVector::from_element(1, drift(x[0], t)),
            move |x: &DVector<T>, t| DMatrix::from_element(1, 1, sq(x[0], t).max(T::zero()).sqrt()),
        )
        .expect("valid dimensions")
    }
}

/// Mean `θ¹` and standard deviation `θ²` of a Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianParams<T: Scalar> {
    pub mean: T,
    pub std_dev: T,
}

impl<T: Scalar> GaussianParams<T> {
    pub fn new(mean: T, std_dev: T) -> Result<Self> {
        if !(std_dev > T::zero()) || !mean.is_finite() || !std_dev.is_finite() {
            return Err(invalid(format!(
                "Gaussian needs finite mean and positive standard deviation (got {mean:?}, {std_dev:?})"
            )));
        }
        Ok(Self { mean, std_dev })
    }

    pub fn from_vector(v: &DVector<T>) -> Result<Self> {
        if v.len() != 2 {
            return Err(Error::Dimension {
                what: "Gaussian parameters",
                expected: 2,
                got: v.len(),
            });
        }
        Self::new(v[0], v[1])
    }

    pub fn to_vector(self) -> DVector<T> {
        DVector::from_vec(vec![self.mean, self.std_dev])
    }

    pub fn density(&self, x: T) -> T {
        let z = (x - self.mean) / self.std_dev;
        (-z * z * lit::<T>(0.5)).exp() / (self.std_dev * T::two_pi().sqrt())
    }
}

/// Observation increments on a uniform grid, optionally with the signal path.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord<T: Scalar> {
    pub dt: T,
    pub increments: Vec<T>,
    pub signal: Option<SamplePath<T>>,
}

impl<T: Scalar> ObservationRecord<T> {
    pub fn new(dt: T, increments: Vec<T>, signal: Option<SamplePath<T>>) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(invalid("observation step must be positive"));
        }
        if let Some(s) = &signal {
            if s.len() != increments.len() + 1 {
                return Err(Error::Dimension {
                    what: "signal samples",
                    expected: increments.len() + 1,
                    got: s.len(),
                });
            }
        }
        Ok(Self { dt, increments, signal })
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn horizon(&self) -> T {
        self.dt * from_usize::<T>(self.increments.len())
    }

    /// Merge blocks of `factor` consecutive increments into one.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.increments.len() % factor != 0 {
            return Err(invalid(format!(
                "coarsening factor {factor} does not divide {} steps",
                self.increments.len()
            )));
        }
        let increments = self
            .increments
            .chunks(factor)
            .map(|c| c.iter().fold(T::zero(), |a, &b| a + b))
            .collect();
        let signal = self.signal.as_ref().map(|s| SamplePath {
            times: s.times.iter().step_by(factor).copied().collect(),
            states: s.states.iter().step_by(factor).cloned().collect(),
        });
        Self::new(self.dt * from_usize::<T>(factor), increments, signal)
    }
}

/// Simulate the signal from `x0` and its observation increments over `[0, horizon]`.
///
/// The signal noise is drawn from `noise.substream(0)` and the observation
/// noise from `noise.substream(1)`; `ΔY_k = b(X_k, t_k) dt + ΔV_k`.
pub fn simulate_signal_observation<T: Scalar>(
    model: &FilterModel<T>,
    x0: T,
    horizon: T,
    dt: T,
    noise: NoiseSource,
) -> Result<ObservationRecord<T>> {
    if !(dt > T::zero()) || !(horizon > T::zero()) {
        return Err(invalid("horizon and step must be positive"));
    }
    let ratio = (horizon / dt).to_f64_lossy();
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-6 || steps < 1.0 {
        return Err(invalid(format!("step {dt:?} does not divide horizon {horizon:?}")));
    }
    let steps = steps as usize;
    let signal_noise = brownian_increments::<T>(noise.substream(0), 1, steps, dt)?;
    let obs_noise = brownian_increments::<T>(noise.substream(1), 1, steps, dt)?;
    let path = euler_maruyama_with_increments(&model.signal_sde(), &DVector::from_element(1, x0), T::zero(), dt, &signal_noise)?;
    let increments = (0..steps)
        .map(|k| model.observation(path.states[k][0], path.times[k]) * dt + obs_noise[(k, 0)])
        .collect();
    ObservationRecord::new(dt, increments, Some(path))
}
