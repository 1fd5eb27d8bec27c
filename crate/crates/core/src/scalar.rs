//! Scalar abstraction shared by the numeric modules.
//!
//! Everything that does geometry or filtering is written against [`Real`] so
//! the same code runs in `f32` (embedded ECU targets) and `f64` (desk
//! verification). The concrete `f64` aliases live at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Wraps an angle into (-π, π].
    fn wrap_angle(self) -> Self {
        let pi = Self::PI();
        let two_pi = pi + pi;
        let mut a = self % two_pi;
        if a <= -pi {
            a = a + two_pi;
        } else if a > pi {
            a = a - two_pi;
        }
        a
    }
}

impl Real for f32 {}
impl Real for f64 {}
