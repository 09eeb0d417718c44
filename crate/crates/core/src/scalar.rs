//! Scalar abstraction shared by the deterministic numerics.
//!
//! Everything that does not draw random numbers (linear algebra, Gaussian
//! surrogate likelihoods, KL divergences, precision matrices, grid posteriors,
//! closed-form moments) is written against [`Real`], so it runs in `f32` or
//! `f64`. The Legendre/covariance coefficient tables go one step further and
//! accept any [`CoeffScalar`], which includes exact rationals.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, NumAssign};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only if the value is not representable,
    /// which cannot happen for the finite literals used in this crate.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    /// Lossy conversion used for diagnostics and error payloads.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize fits")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Scalar for rational coefficient tables. Implemented by floats and by
/// `Ratio<i64>`, so the same expression can be evaluated exactly.
pub trait CoeffScalar: Num + Clone + FromPrimitive {}

impl CoeffScalar for f32 {}
impl CoeffScalar for f64 {}
impl CoeffScalar for Ratio<i64> {}
impl CoeffScalar for Ratio<i128> {}

/// Fixed-order compensated (Kahan–Babuška) summation.
pub fn compensated_sum<T: Real>(values: impl IntoIterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut comp = T::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
