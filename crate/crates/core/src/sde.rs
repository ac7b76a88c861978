//! Itô SDEs on `ℝʳ`, seeded Brownian increments and Euler–Maruyama paths.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::scalar::{from_usize, lit, Scalar};

pub type VectorField<T> = Arc<dyn Fn(&DVector<T>, T) -> DVector<T> + Send + Sync>;
pub type MatrixField<T> = Arc<dyn Fn(&DVector<T>, T) -> DMatrix<T> + Send + Sync>;
/// `(x, t) ↦ [∂b_α/∂x]_α`, one `r×r` matrix per noise component with entry
/// `(i, j) = ∂b_α^i/∂x^j`.
pub type JacobianField<T> = Arc<dyn Fn(&DVector<T>, T) -> Vec<DMatrix<T>> + Send + Sync>;

/// `dX = a(X, t) dt + Σ_α b_α(X, t) dW^α` on `ℝʳ` with `m` driving Brownian motions.
#[derive(Clone)]
pub struct AmbientSde<T: Scalar> {
    dim_state: usize,
    dim_noise: usize,
    drift: VectorField<T>,
    diffusion: MatrixField<T>,
    diffusion_jacobian: Option<JacobianField<T>>,
}

impl<T: Scalar> fmt::Debug for AmbientSde<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AmbientSde")
            .field("dim_state", &self.dim_state)
            .field("dim_noise", &self.dim_noise)
            .field("analytic_jacobian", &self.diffusion_jacobian.is_some())
            .finish()
    }
}

impl<T: Scalar> AmbientSde<T> {
    pub fn new<A, B>(dim_state: usize, dim_noise: usize, drift: A, diffusion: B) -> Result<Self>
    where
        A: Fn(&DVector<T>, T) -> DVector<T> + Send + Sync + 'static,
        B: Fn(&DVector<T>, T) -> DMatrix<T> + Send + Sync + 'static,
    {
        if dim_state == 0 || dim_noise == 0 {
            return Err(invalid("state and noise dimensions must be positive"));
        }
        Ok(Self {
            dim_state,
            dim_noise,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            diffusion_jacobian: None,
        })
    }

    pub fn with_diffusion_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&DVector<T>, T) -> Vec<DMatrix<T>> + Send + Sync + 'static,
    {
        self.diffusion_jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    pub fn dim_noise(&self) -> usize {
        self.dim_noise
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.diffusion_jacobian.is_some()
    }

    fn check_state(&self, x: &DVector<T>) -> Result<()> {
        if x.len() != self.dim_state {
            return Err(Error::Dimension {
                what: "ambient state",
                expected: self.dim_state,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn drift(&self, x: &DVector<T>, t: T) -> Result<DVector<T>> {
        self.check_state(x)?;
        let a = (self.drift)(x, t);
        if a.len() != self.dim_state {
            return Err(Error::Dimension {
                what: "drift output",
                expected: self.dim_state,
                got: a.len(),
            });
        }
        Ok(a)
    }

    /// The `r×m` diffusion matrix whose column `α` is `b_α`.
    pub fn diffusion(&self, x: &DVector<T>, t: T) -> Result<DMatrix<T>> {
        self.check_state(x)?;
        let b = (self.diffusion)(x, t);
        if b.nrows() != self.dim_state {
            return Err(Error::Dimension {
                what: "diffusion rows",
                expected: self.dim_state,
                got: b.nrows(),
            });
        }
        if b.ncols() != self.dim_noise {
            return Err(Error::Dimension {
                what: "diffusion columns",
                expected: self.dim_noise,
                got: b.ncols(),
            });
        }
        Ok(b)
    }

    /// Analytic Jacobian if one was supplied, otherwise `None`.
    pub fn analytic_diffusion_jacobian(&self, x: &DVector<T>, t: T) -> Result<Option<Vec<DMatrix<T>>>> {
        self.check_state(x)?;
        let Some(jac) = &self.diffusion_jacobian else {
            return Ok(None);
        };
        let j = jac(x, t);
        if j.len() != self.dim_noise {
            return Err(Error::Dimension {
                what: "diffusion jacobian components",
                expected: self.dim_noise,
                got: j.len(),
            });
        }
        for m in &j {
            if m.nrows() != self.dim_state || m.ncols() != self.dim_state {
                return Err(Error::Dimension {
                    what: "diffusion jacobian block",
                    expected: self.dim_state,
                    got: m.nrows().max(m.ncols()),
                });
            }
        }
        Ok(Some(j))
    }

    /// Central finite differences of the diffusion in each state direction.
    pub fn fd_diffusion_jacobian(&self, x: &DVector<T>, t: T) -> Result<Vec<DMatrix<T>>> {
        self.check_state(x)?;
        let (r, m) = (self.dim_state, self.dim_noise);
        let mut out = vec![DMatrix::zeros(r, r); m];
        let two = lit::<T>(2.0);
        for j in 0..r {
            let h = T::fd_step(x[j]);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let bp = self.diffusion(&xp, t)?;
            let bm = self.diffusion(&xm, t)?;
            for (alpha, block) in out.iter_mut().enumerate() {
                for i in 0..r {
                    block[(i, j)] = (bp[(i, alpha)] - bm[(i, alpha)]) / (two * h);
                }
            }
        }
        Ok(out)
    }

    /// Analytic Jacobian when available, central differences otherwise.
    pub fn diffusion_jacobian(&self, x: &DVector<T>, t: T) -> Result<Vec<DMatrix<T>>> {
        match self.analytic_diffusion_jacobian(x, t)? {
            Some(j) => Ok(j),
            None => self.fd_diffusion_jacobian(x, t),
        }
    }
}

/// Seed and stream of a counter-based generator. Equal pairs reproduce the
/// same draws bit for bit; distinct streams are independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseSource {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl NoiseSource {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// A child stream keyed by `key`, e.g. a Brownian component or a path index.
    pub fn substream(&self, key: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(key.wrapping_add(1))),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// `n` independent standard normal draws.
    pub fn standard_normals<T: Scalar>(&self, n: usize) -> Vec<T> {
        let mut rng = self.rng();
        (0..n)
            .map(|_| lit::<T>(rng.sample::<f64, _>(StandardNormal)))
            .collect()
    }
}

/// Discrete trajectory `(t_k, X_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath<T: Scalar> {
    pub times: Vec<T>,
    pub states: Vec<DVector<T>>,
}

impl<T: Scalar> SamplePath<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn terminal(&self) -> &DVector<T> {
        self.states.last().expect("sample path always holds the initial state")
    }
}

/// `n_steps × m` matrix of independent `N(0, dt)` increments.
///
/// Column `α` is drawn from `noise.substream(α)`, so the `α`-th Brownian
/// motion does not depend on how many components are requested.
pub fn brownian_increments<T: Scalar>(
    noise: NoiseSource,
    m: usize,
    n_steps: usize,
    dt: T,
) -> Result<DMatrix<T>> {
    if !(dt > T::zero()) {
        return Err(invalid("dt must be positive"));
    }
    let sd = dt.sqrt();
    let mut out = DMatrix::zeros(n_steps, m);
    for alpha in 0..m {
        let z = noise.substream(alpha as u64).standard_normals::<T>(n_steps);
        for (k, zk) in z.into_iter().enumerate() {
            out[(k, alpha)] = zk * sd;
        }
    }
    Ok(out)
}

/// Euler–Maruyama with freshly drawn increments.
pub fn euler_maruyama<T: Scalar>(
    sde: &AmbientSde<T>,
    x0: &DVector<T>,
    t0: T,
    dt: T,
    n_steps: usize,
    noise: NoiseSource,
) -> Result<SamplePath<T>> {
    let dw = brownian_increments(noise, sde.dim_noise(), n_steps, dt)?;
    euler_maruyama_with_increments(sde, x0, t0, dt, &dw)
}

/// Euler–Maruyama driven by caller-supplied increments (one row per step),
/// used when several schemes must share the same Brownian path.
pub fn euler_maruyama_with_increments<T: Scalar>(
    sde: &AmbientSde<T>,
    x0: &DVector<T>,
    t0: T,
    dt: T,
    increments: &DMatrix<T>,
) -> Result<SamplePath<T>> {
    if !(dt > T::zero()) {
        return Err(invalid("dt must be positive"));
    }
    if increments.ncols() != sde.dim_noise() {
        return Err(Error::Dimension {
            what: "increment columns",
            expected: sde.dim_noise(),
            got: increments.ncols(),
        });
    }
    let n_steps = increments.nrows();
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut x = x0.clone();
    sde.check_state(&x)?;
    times.push(t0);
    states.push(x.clone());
    for k in 0..n_steps {
        let t = t0 + from_usize::<T>(k) * dt;
        let a = sde.drift(&x, t)?;
        let b = sde.diffusion(&x, t)?;
        let dw = increments.row(k).transpose();
        x += a * dt + b * dw;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowup {
                step: k + 1,
                time: (t + dt).to_f64_lossy(),
            });
        }
        times.push(t0 + from_usize::<T>(k + 1) * dt);
        states.push(x.clone());
    }
    Ok(SamplePath { times, states })
}

/// `½ Σ_α Σ_j b_α^j ∂b_α^i/∂x^j`, the Itô–Stratonovich drift correction.
pub fn stratonovich_correction<T: Scalar>(sde: &AmbientSde<T>, x: &DVector<T>, t: T) -> Result<DVector<T>> {
    let b = sde.diffusion(x, t)?;
    let jac = sde.diffusion_jacobian(x, t)?;
    let mut c = DVector::zeros(sde.dim_state());
    for (alpha, j) in jac.iter().enumerate() {
        c += j * b.column(alpha);
    }
    Ok(c * lit::<T>(0.5))
}

/// Drift of the equivalent Stratonovich SDE: `ā = a − ½ Σ b_α^j ∂_j b_α`.
pub fn ito_to_stratonovich_drift<T: Scalar>(sde: &AmbientSde<T>, x: &DVector<T>, t: T) -> Result<DVector<T>> {
    Ok(sde.drift(x, t)? - stratonovich_correction(sde, x, t)?)
}

/// Inverse of [`ito_to_stratonovich_drift`]: adds the correction back to `ā`.
pub fn stratonovich_to_ito_drift<T: Scalar>(
    sde: &AmbientSde<T>,
    strat_drift: &DVector<T>,
    x: &DVector<T>,
    t: T,
) -> Result<DVector<T>> {
    Ok(strat_drift + stratonovich_correction(sde, x, t)?)
}
