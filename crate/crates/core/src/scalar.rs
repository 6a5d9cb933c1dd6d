//! Scalar abstraction so the numeric kernels run at either f32 or f64.
//!
//! The shipped pipeline and CLI run everything at f64 (see the aliases at the
//! crate root); f32 stays available for memory-bound experiments.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use rustfft::FftNum;

/// Floating-point scalar usable by every kernel in this crate.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + FftNum
    + std::iter::Sum
    + std::fmt::Display
    + Default
    + serde::Serialize
    + serde::de::DeserializeOwned
{
    /// Lossy conversion from f64 (saturates at the type's range).
    fn of_f64(v: f64) -> Self;

    /// Widening conversion to f64.
    fn as_f64(self) -> f64;

    fn of_usize(v: usize) -> Self {
        Self::of_f64(v as f64)
    }
}

impl Scalar for f32 {
    fn of_f64(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of_f64(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }
}
