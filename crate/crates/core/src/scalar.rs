use nalgebra::RealField;
use num_traits::{FromPrimitive, NumCast, ToPrimitive};

/// Floating-point scalar the library is generic over: `f32` or `f64`.
pub trait Scalar: RealField + NumCast + FromPrimitive + ToPrimitive + Copy + Default {}

impl<T> Scalar for T where T: RealField + NumCast + FromPrimitive + ToPrimitive + Copy + Default {}

/// Converts an `f64` literal into the working scalar type.
#[inline]
pub fn fl<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("finite f64 literal")
}

/// `true` when the value is neither NaN nor infinite.
#[inline]
pub fn is_finite<T: Scalar>(x: T) -> bool {
    x.to_f64().map(f64::is_finite).unwrap_or(false)
}
