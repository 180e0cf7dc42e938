//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar usable by the solvers (`f32` or `f64`).
///
/// Tolerances throughout the crate are expressed in `f64` and converted with
/// [`lit`]; they are tuned for `f64`, so `f32` instantiations should relax
/// solver tolerances accordingly.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Send + Sync
{
}

impl<T> Scalar for T where
    T: RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Send + Sync
{
}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Relative offset `x`, raised to a few ulps when the scalar type cannot resolve it.
#[inline]
pub fn rel<T: Scalar>(x: f64) -> T {
    lit::<T>(x).max(T::default_epsilon() * lit::<T>(16.0))
}

/// Lossy conversion to `f64`, used for reporting and random sampling.
#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
