//! Scalar abstraction shared by every numerical module.
//!
//! All simulation and certificate code is written against [`Real`], which is
//! implemented for `f32` and `f64`. Constants are written as `f64` literals and
//! converted with [`lit`].

use nalgebra as na;
use num_traits as nt;
use std::fmt::LowerExp;

/// Floating point type usable by the simulator and the certificate engine.
pub trait Real:
    na::RealField + na::Scalar + Copy + nt::FromPrimitive + nt::ToPrimitive + nt::FloatConst + LowerExp
{
    /// Machine epsilon of the type.
    const EPS: Self;
}

impl Real for f32 {
    const EPS: Self = f32::EPSILON;
}

impl Real for f64 {
    const EPS: Self = f64::EPSILON;
}

/// Converts an `f64` constant into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant representable in scalar type")
}

/// Converts a `usize` count into `T`.
#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

/// Lossy conversion to `f64`, used for reporting and file output.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
