//! Floating-point scalar abstraction used by the quantizer and the bound formulas.

use num_traits::{Float, FromPrimitive, NumCast};
use std::fmt::{Debug, Display};

/// Real scalar usable by the generic parts of the crate.
pub trait Scalar: Float + FromPrimitive + NumCast + Debug + Display + Send + Sync + 'static {
    /// Number of explicit mantissa bits, which caps the exact integer range.
    const MANTISSA_BITS: u32;

    fn lit(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("literal representable")
    }

    fn count(x: usize) -> Self {
        <Self as NumCast>::from(x).expect("integer representable")
    }

    fn int(x: i64) -> Self {
        <Self as NumCast>::from(x).expect("integer representable")
    }

    fn as_f64(self) -> f64 {
        <f64 as NumCast>::from(self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const MANTISSA_BITS: u32 = 23;
}

impl Scalar for f64 {
    const MANTISSA_BITS: u32 = 52;
}
