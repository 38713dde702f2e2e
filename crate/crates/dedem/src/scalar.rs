//! Generic scalar abstraction: the numeric kernels are written once over
//! [`Scalar`] and instantiated at `f32` or `f64` (the CLI and the shipped
//! presets use `f64`, see the crate-root aliases).

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use std::fmt::{Debug, Display, LowerExp};
use std::ops::{AddAssign, MulAssign};

/// Floating-point scalar the solver is generic over.
pub trait Scalar:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + Display
    + Debug
    + LowerExp
    + AddAssign
    + MulAssign
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; literals in the math go through this.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal must convert to Scalar")
    }

    /// Widening back to `f64` for reporting and file output.
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

/// Sign convention used throughout geometry and differentiation:
/// `sgn(v) = 1` for `v > 0` and `-1` for `v <= 0`.
pub fn sgn<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else {
        -T::one()
    }
}
