use crate::error::{invalid, Error, Result};
use crate::scalar::{from_usize, lit, Scalar};

use super::model::GaussianParams;

/// Uniform grid of `n_cells` intervals on `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T: Scalar> {
    pub x_min: T,
    pub x_max: T,
    pub n_cells: usize,
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(x_min: T, x_max: T, n_cells: usize) -> Result<Self> {
        if !(x_max > x_min) || n_cells < 2 {
            return Err(invalid(format!(
                "grid needs x_max > x_min and at least two cells (got [{x_min:?}, {x_max:?}] with {n_cells})"
            )));
        }
        Ok(Self { x_min, x_max, n_cells })
    }

    pub fn dx(&self) -> T {
        (self.x_max - self.x_min) / from_usize::<T>(self.n_cells)
    }

    pub fn node(&self, i: usize) -> T {
        self.x_min + self.dx() * from_usize::<T>(i)
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..=self.n_cells).map(|i| self.node(i)).collect()
    }
}

/// A density sampled at the `n_cells + 1` nodes of a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid<T: Scalar> {
    spec: GridSpec<T>,
    values: Vec<T>,
}

impl<T: Scalar> DensityGrid<T> {
    pub fn new(spec: GridSpec<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != spec.n_cells + 1 {
            return Err(Error::Dimension {
                what: "density grid values",
                expected: spec.n_cells + 1,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(invalid("density values must be finite and nonnegative"));
        }
        Ok(Self { spec, values })
    }

    /// A Gaussian sampled on the grid and normalised.
    pub fn from_gaussian(spec: GridSpec<T>, theta: &GaussianParams<T>) -> Result<Self> {
        let values = spec.nodes().into_iter().map(|x| theta.density(x)).collect();
        let mut g = Self::new(spec, values)?;
        g.normalize()?;
        Ok(g)
    }

    pub fn spec(&self) -> &GridSpec<T> {
        &self.spec
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn n_cells(&self) -> usize {
        self.spec.n_cells
    }

    pub fn dx(&self) -> T {
        self.spec.dx()
    }

    pub fn node(&self, i: usize) -> T {
        self.spec.node(i)
    }

    /// Trapezoidal integral of node values `g_i`.
    pub fn trapezoid(&self, g: impl Fn(usize, T) -> T) -> T {
        trapezoid(&self.spec, |i, x| g(i, x))
    }

    pub fn mass(&self) -> T {
        self.trapezoid(|i, _| self.values[i])
    }

    /// `E_p[g]` by the trapezoidal rule.
    pub fn expectation(&self, g: impl Fn(T) -> T) -> T {
        self.trapezoid(|i, x| self.values[i] * g(x))
    }

    pub fn mean(&self) -> T {
        self.expectation(|x| x)
    }

    pub fn variance(&self) -> T {
        let m = self.mean();
        self.expectation(|x| (x - m) * (x - m))
    }

    /// Scale to unit mass; fails if the mass is not positive.
    pub fn normalize(&mut self) -> Result<T> {
        let mass = self.mass();
        if !(mass > T::zero()) || !mass.is_finite() {
            return Err(Error::DegenerateState(format!("density mass {mass:?} cannot be normalised")));
        }
        for v in &mut self.values {
            *v /= mass;
        }
        Ok(mass)
    }

    pub(crate) fn from_raw(spec: GridSpec<T>, values: Vec<T>) -> Self {
        Self { spec, values }
    }
}

pub(crate) fn trapezoid<T: Scalar>(spec: &GridSpec<T>, g: impl Fn(usize, T) -> T) -> T {
    let n = spec.n_cells;
    let mut s = (g(0, spec.node(0)) + g(n, spec.node(n))) * lit::<T>(0.5);
    for i in 1..n {
        s += g(i, spec.node(i));
    }
    s * spec.dx()
}

/// `‖p − p_θ‖` in `L²` by the trapezoidal rule on the grid of `p`.
pub fn l2_residual<T: Scalar>(p: &DensityGrid<T>, theta: &GaussianParams<T>) -> T {
    p.trapezoid(|i, x| {
        let d = p.values[i] - theta.density(x);
        d * d
    })
    .sqrt()
}

/// `‖√p − √p_θ‖` in `L²` by the trapezoidal rule on the grid of `p`.
pub fn hellinger_residual<T: Scalar>(p: &DensityGrid<T>, theta: &GaussianParams<T>) -> T {
    p.trapezoid(|i, x| {
        let d = p.values[i].sqrt() - theta.density(x).sqrt();
        d * d
    })
    .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn dense_integral(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        // Composite Simpson on 200 000 panels.
        let n = 200_000;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn grid_spec_validation() {
        assert!(GridSpec::new(1.0, 0.0, 10).is_err());
        assert!(GridSpec::new(0.0, 1.0, 1).is_err());
        let g = GridSpec::new(-10.0, 10.0, 1000).unwrap();
        assert_relative_eq!(g.dx(), 0.02, epsilon = 1e-15);
        assert_eq!(g.nodes().len(), 1001);
    }

    #[test]
    fn gaussian_grid_moments() {
        let spec = GridSpec::new(-10.0, 10.0, 1000).unwrap();
        let p: DensityGrid<f64> = DensityGrid::from_gaussian(spec, &GaussianParams::new(0.4, 1.3).unwrap()).unwrap();
        assert!((p.mass() - 1.0).abs() < 1e-12);
        assert_relative_eq!(p.mean(), 0.4, epsilon = 1e-10);
        assert_relative_eq!(p.variance(), 1.69, epsilon = 1e-10);
    }

    #[test]
    fn invalid_values_rejected() {
        let spec = GridSpec::new(0.0, 1.0, 2).unwrap();
        assert!(DensityGrid::new(spec, vec![0.0, 1.0]).is_err());
        assert!(DensityGrid::new(spec, vec![0.0, -1.0, 0.0]).is_err());
        let mut z = DensityGrid::new(spec, vec![0.0; 3]).unwrap();
        assert!(z.normalize().is_err());
    }

    #[test]
    fn matching_gaussian_has_zero_residual() {
        let spec = GridSpec::new(-10.0, 10.0, 1000).unwrap();
        let theta = GaussianParams::new(-0.3, 0.9).unwrap();
        let p = DensityGrid::from_gaussian(spec, &theta).unwrap();
        assert!(l2_residual(&p, &theta) < 1e-8);
        assert!(hellinger_residual(&p, &theta) < 1e-8);
    }

    #[test]
    fn shifted_unit_gaussians() {
        let spec = GridSpec::new(-10.0, 10.0, 1000).unwrap();
        let p = DensityGrid::from_gaussian(spec, &GaussianParams::new(0.0, 1.0).unwrap()).unwrap();
        let q = GaussianParams::new(1.0, 1.0).unwrap();
        let r = l2_residual(&p, &q);
        let closed = ((1.0 - (-0.25f64).exp()) / PI.sqrt()).sqrt();
        let n0 = GaussianParams::new(0.0, 1.0).unwrap();
        let brute = dense_integral(|x| (n0.density(x) - q.density(x)).powi(2), -12.0, 12.0).sqrt();
        assert_relative_eq!(closed, brute, epsilon = 1e-10);
        assert_relative_eq!(r, closed, epsilon = 1e-8);
        assert_relative_eq!(r, 0.353268, epsilon = 1e-6);
    }

    #[test]
    fn hellinger_between_scales() {
        let spec = GridSpec::new(-20.0, 20.0, 2000).unwrap();
        let p = DensityGrid::from_gaussian(spec, &GaussianParams::new(0.0, 1.0).unwrap()).unwrap();
        let q = GaussianParams::new(0.0, 2.0).unwrap();
        let n0 = GaussianParams::new(0.0, 1.0).unwrap();
        let brute = dense_integral(|x| (n0.density(x).sqrt() - q.density(x).sqrt()).powi(2), -30.0, 30.0).sqrt();
        let closed = (2.0 - 2.0 * (0.8f64).sqrt()).sqrt();
        assert_relative_eq!(brute, closed, epsilon = 1e-10);
        assert_relative_eq!(hellinger_residual(&p, &q), brute, epsilon = 1e-8);
    }
}
