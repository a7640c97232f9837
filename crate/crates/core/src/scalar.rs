//! Scalar abstraction shared by the dynamics, control and learning code.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable everywhere in the crate (`f32` or `f64`).
pub trait Real:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + ndarray::LinalgScalar
    + Default
    + Send
    + Sync
    + serde::Serialize
    + serde::de::DeserializeOwned
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for `T::lit(x)`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::lit(x)
}
