//! Scalar abstraction shared by every estimator in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the filters: `f32` or `f64`.
///
/// Everything here needs `sqrt`, trigonometry and Cholesky factorizations, so
/// exact rational types are not supported.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive {}

impl<T> Scalar for T where T: RealField + Copy + FromPrimitive + ToPrimitive {}

/// Converts an `f64` literal into the working scalar type.
#[inline]
pub fn lit<T: Scalar>(value: f64) -> T {
    T::from_f64(value).expect("f64 literal must be representable")
}

/// Lossy conversion back to `f64` (diagnostics, reports).
#[inline]
pub fn to_f64<T: Scalar>(value: T) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}
