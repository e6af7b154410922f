use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point element type for all numeric kernels.
///
/// Implemented for `f32` and `f64` through the blanket impl; the pipeline
/// types at the crate root fix it to `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Sum + Display + Debug + Send + Sync + 'static
{
    /// Conversion from `f64` literals and config values.
    fn of_f64(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 conversion")
    }

    /// Conversion to `f64` for serialization and reporting.
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("f64 conversion")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssignOps
        + Sum
        + Display
        + Debug
        + Send
        + Sync
        + 'static
{
}
