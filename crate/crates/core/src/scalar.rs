//! Scalar abstraction shared by every solver in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
///
/// Random draws are produced in `f64` and narrowed with [`Real::of`], so the
/// byte-level determinism contract holds for both widths.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal or draw.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Real")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize is representable in every Real")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn half() -> Self {
        Self::of(0.5)
    }

    #[inline]
    fn two() -> Self {
        Self::of(2.0)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Euclidean norm squared of a small vector.
#[inline]
pub fn norm_sq<R: Real>(v: &[R]) -> R {
    v.iter().fold(R::zero(), |acc, &x| acc + x * x)
}

#[inline]
pub fn norm<R: Real>(v: &[R]) -> R {
    norm_sq(v).sqrt()
}

/// Squared Euclidean distance between two equally sized slices.
#[inline]
pub fn dist_sq<R: Real>(a: &[R], b: &[R]) -> R {
    a.iter()
        .zip(b)
        .fold(R::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}
