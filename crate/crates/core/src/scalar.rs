//! Scalar abstraction shared by every pixel kernel.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating point pixel scalar: `f32` or `f64`.
///
/// All image math is written against this trait so the same kernels serve
/// the fast `f32` path and the `f64` reference path used by the oracles.
pub trait Scalar:
    Float + FromPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal or computed value.
    #[inline]
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 converts to any Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn half() -> Self {
        Self::of(0.5)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Midpoint of two order statistics, used for even-length medians.
#[inline]
pub(crate) fn midpoint<T: Scalar>(a: T, b: T) -> T {
    (a + b) * T::half()
}
