use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar for every numeric routine in this crate: f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Sum + Default + 'static
{
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Debug + Display + Sum + Default + 'static
{
}

/// Embed an f64 literal into the generic scalar type.
pub(crate) fn fl<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Embed a usize count into the generic scalar type.
pub(crate) fn fu<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}
