//! Scalar abstraction used by the numeric kernel.
//!
//! The solver and the dense linear algebra underneath it are written once
//! against [`Scalar`] and instantiated for `f32` and `f64`. Market models
//! themselves are fixed to `f64`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Relative tolerance used for stationarity, rank and feasibility tests.
    fn solver_tolerance() -> Self;

    /// Converts an `f64` literal. Panics only if the target type cannot
    /// represent finite literals, which never happens for `f32`/`f64`.
    #[inline]
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("scalar literal")
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }
}

impl Scalar for f32 {
    fn solver_tolerance() -> Self {
        2e-5
    }
}

impl Scalar for f64 {
    fn solver_tolerance() -> Self {
        1e-10
    }
}

/// Absolute tolerance `tol * max(1, |magnitude|)`.
#[inline]
pub fn scaled_tol<T: Scalar>(tol: T, magnitude: T) -> T {
    tol * magnitude.abs().max(T::one())
}
