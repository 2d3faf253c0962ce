//! Scalar abstraction: every numeric kernel is generic over f32/f64.
//!
//! Training runs in f32; the gradient-verification suites instantiate the
//! same code in f64, where central finite differences are reliable.

use num_traits::{Float, NumAssignOps};

pub trait Real:
    Float
    + NumAssignOps
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    fn from_f64(x: f64) -> Self;
    fn into_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn into_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }

    #[inline]
    fn into_f64(self) -> f64 {
        self
    }
}
