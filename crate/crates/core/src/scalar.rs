//! Scalar abstraction shared by every numeric routine in the crate.

use ndarray::NdFloat;
use num_traits::{FloatConst, FromPrimitive};
use std::iter::Sum;

/// Floating point scalar the reconstruction code is generic over (`f32` or `f64`).
pub trait Real: NdFloat + FromPrimitive + FloatConst + Sum + Default {}

impl<T> Real for T where T: NdFloat + FromPrimitive + FloatConst + Sum + Default {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Converts a count into the working scalar.
#[inline]
pub fn count<T: Real>(n: u32) -> T {
    T::from_u32(n).expect("count representable in scalar type")
}
