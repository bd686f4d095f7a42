//! Scalar abstraction shared by every solver in the crate.

use std::fmt;

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Real floating-point type the solvers are generic over (`f32`, `f64`).
pub trait Real: RealField + Copy + ToPrimitive + fmt::Display + fmt::Debug + Send + Sync + 'static {
    /// Converts an `f64` literal into this type.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    /// Lossy conversion used for reports.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        nalgebra::convert(n as f64)
    }

    /// Unit roundoff of the type.
    #[inline]
    fn eps() -> Self {
        Self::default_epsilon()
    }
}

impl<T> Real for T where
    T: RealField + Copy + ToPrimitive + fmt::Display + fmt::Debug + Send + Sync + 'static
{
}
