//! Scalar abstraction for the numeric core.
//!
//! Every quantity in the simulator (seconds, energy units, Q-values,
//! objective values) is expressed in one floating-point type. The crate is
//! generic over that type via [`Scalar`]; `f32` and `f64` are supported out
//! of the box and the concrete aliases at the crate root pin `f64` for the
//! command-line tools.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar used throughout the simulator core.
pub trait Scalar:
    'static + Send + Sync + Float + FromPrimitive + NumAssign + Sum + Default + Display + Debug
{
    /// Converts an `f64` constant into the scalar type.
    ///
    /// Panics if the value is not representable, which cannot happen for the
    /// in-range literals this crate feeds it.
    #[inline]
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("literal representable in scalar type")
    }

    /// Converts a `usize` count into the scalar type.
    #[inline]
    fn from_count(value: usize) -> Self {
        Self::from_usize(value).expect("count representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_conversion_round_trips() {
        assert_eq!(f64::lit(0.25), 0.25);
        assert_eq!(f32::lit(0.5), 0.5f32);
        assert_eq!(f64::from_count(42), 42.0);
    }
}
