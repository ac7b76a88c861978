use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Floating-point scalar used throughout the crate: `f32` or `f64`.
pub trait Scalar: RealField + Copy + ToPrimitive + Send + Sync + 'static {
    /// Machine epsilon of the type.
    fn eps() -> Self {
        Self::default_epsilon()
    }

    /// Central-difference step `cbrt(ε)·max(1, |x|)`.
    fn fd_step(x: Self) -> Self {
        Self::eps().cbrt() * Self::one().max(x.abs())
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Scalar>(x: f64) -> T {
    nalgebra::convert(x)
}

#[inline]
pub fn from_usize<T: Scalar>(n: usize) -> T {
    nalgebra::convert(n as f64)
}
