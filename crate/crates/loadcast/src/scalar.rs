//! Scalar abstraction for the numeric core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssignOps};

/// Floating-point scalar usable by the numeric core.
///
/// Implemented for `f32` and `f64`. The crate-level type aliases pin `f64`,
/// which is the precision the pipeline and the test tolerances assume.
pub trait Scalar:
    Float + NumAssignOps + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Conversion from `f64`, used for constants and RNG draws.
    fn from_f64(v: f64) -> Self;

    /// Widening conversion to `f64`, used for I/O and metrics.
    fn as_f64(self) -> f64;
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> f64 {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> f32 {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}
