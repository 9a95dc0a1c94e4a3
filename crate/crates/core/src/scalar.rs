//! Scalar abstractions.
//!
//! Pure coefficient algebra (convolution, stability indices, Diophantine
//! solves) only needs field operations and runs over any [`Scalar`],
//! including exact rationals. Anything that needs square roots or
//! eigenvalues is bounded on [`Real`] (`f32` / `f64`).

use std::fmt::Debug;
use std::ops::Neg;

use nalgebra::RealField;
use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Field-like scalar usable by the exact-arithmetic parts of the toolkit.
pub trait Scalar:
    Clone + Debug + PartialOrd + Num + Neg<Output = Self> + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Clone + Debug + PartialOrd + Num + Neg<Output = Self> + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
}

/// Floating-point scalar with the linear-algebra support of `nalgebra`.
pub trait Real: Scalar + RealField + Copy {}

impl<T> Real for T where T: Scalar + RealField + Copy {}

/// Converts an `f64` literal into the working scalar.
///
/// Panics only for non-finite input, which never occurs for the literals used
/// in this crate.
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("finite literal representable in scalar type")
}

/// Absolute value through the ordering, valid for every [`Scalar`].
pub fn abs<T: Scalar>(x: &T) -> T {
    if *x < T::zero() {
        -x.clone()
    } else {
        x.clone()
    }
}

/// Lossy conversion used for reporting and tolerances.
pub fn to_f64<T: Scalar>(x: &T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub(crate) fn is_finite<T: Scalar>(x: &T) -> bool {
    to_f64(x).is_finite()
}

/// Relative difference `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
