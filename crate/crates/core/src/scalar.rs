use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Scalar type for the core math: `f32`, `f64`, or any float-like type with
/// the same trait surface.
///
/// Tolerances are passed in by the caller, so a given precision only has to
/// satisfy the tolerances it is asked for.
pub trait Scalar:
    Float + FromPrimitive + Sum<Self> + Debug + Display + Send + Sync + 'static
{
    /// Shorthand for lossless construction from small integer literals.
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize out of scalar range")
    }

    /// Shorthand for construction from an `f64` constant.
    fn of_f64(x: f64) -> Self {
        Self::from_f64(x).expect("f64 out of scalar range")
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + Sum<T> + Debug + Display + Send + Sync + 'static
{
}
