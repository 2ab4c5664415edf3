//! Floating-point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, NumAssign};
use rustfft::FftNum;

/// Real scalar type the simulator is generic over (`f32` or `f64`).
///
/// Everything FFT-based needs [`FftNum`]; the rest is ordinary float math.
pub trait Scalar:
    Float
    + FloatConst
    + NumAssign
    + FftNum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into `Self`.
    fn lit(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("f64 literal representable")
    }

    /// Converts a count or index into `Self`.
    fn of_usize(n: usize) -> Self {
        <Self as num_traits::NumCast>::from(n).expect("usize representable")
    }

    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Absolute tolerance used for conservation checks: the requested value,
    /// loosened to the square root of machine epsilon for narrow types.
    fn conservation_tol(requested: f64) -> Self {
        let floor = Self::epsilon().sqrt();
        let req = Self::lit(requested);
        if req > floor {
            req
        } else {
            floor
        }
    }
}

impl<T> Scalar for T where
    T: Float
        + FloatConst
        + NumAssign
        + FftNum
        + Default
        + Debug
        + Display
        + LowerExp
        + Send
        + Sync
        + 'static
{
}
