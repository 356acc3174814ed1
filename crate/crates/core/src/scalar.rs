//! Scalar abstraction shared by the numerical modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the DSP, HMM and metric code is written against.
///
/// Implemented for `f32` and `f64`. Pipelines that persist models use `f64`
/// (see the aliases at the crate root).
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + rustfft::FftNum
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; used for literals.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `log(exp(a) + exp(b))` without overflow; `-inf` is the additive identity.
#[inline]
pub fn log_add<S: Scalar>(a: S, b: S) -> S {
    if a == S::neg_infinity() {
        return b;
    }
    if b == S::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log(sum(exp(x)))` over a slice. Empty input gives `-inf`.
pub fn log_sum_exp<S: Scalar>(values: &[S]) -> S {
    let max = values
        .iter()
        .copied()
        .fold(S::neg_infinity(), |m, v| if v > m { v } else { m });
    if max == S::neg_infinity() {
        return max;
    }
    if max == S::infinity() {
        return max;
    }
    let sum: S = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}
