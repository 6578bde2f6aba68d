//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point type the simulator can run in.
///
/// Fields, screens and modal projections are generic over this trait.
/// Covariance factorizations for the phase-screen extension are always
/// carried out in `f64` and converted on output, since the covariance
/// matrices involved are far too ill-conditioned for single precision.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + rustfft::FftNum
    + Default
    + Debug
    + Display
    + Sum
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("f64 literal representable in scalar type")
}

/// Widens `T` to `f64`.
#[inline]
pub fn wide<T: Real>(v: T) -> f64 {
    v.to_f64().expect("scalar convertible to f64")
}
