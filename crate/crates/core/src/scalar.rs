//! Scalar abstraction shared by every numeric kernel in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `ln(1 + e^x)` without overflow, floored at the smallest positive
    /// normal so it stays strictly positive where `e^x` underflows.
    #[inline]
    fn softplus(self) -> Self {
        let y = (-self.abs()).exp().ln_1p() + self.max(Self::zero());
        if y == Self::zero() {
            Self::min_positive_value()
        } else {
            y
        }
    }

    #[inline]
    fn sigmoid(self) -> Self {
        if self >= Self::zero() {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }

    /// Inverse of [`Real::softplus`] for positive arguments.
    #[inline]
    fn softplus_inv(self) -> Self {
        // ln(e^y - 1) = y + ln(1 - e^-y)
        self + (-(-self).exp()).ln_1p()
    }
}

impl Real for f32 {}
impl Real for f64 {}
