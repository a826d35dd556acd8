//! Scalar traits shared by every module.
//!
//! The environment and the payoff tables only need field arithmetic and an
//! ordering, so they are written against [`Real`], which exact rationals
//! satisfy. Differentiable computation needs transcendental functions and is
//! written against [`FloatScalar`].

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Ordered field element usable for water levels, rewards and payoffs.
pub trait Real:
    Num + PartialOrd + Copy + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    /// Converts a literal constant. Panics only if the target type cannot
    /// represent it, which never happens for `f32`, `f64` or `Ratio<i64>` with
    /// the small decimal constants this crate uses.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(|| panic!("{v} is not representable"))
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(|| panic!("{n} is not representable"))
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn abs_val(self) -> Self {
        if self < Self::zero() {
            Self::zero() - self
        } else {
            self
        }
    }
}

impl<T> Real for T where
    T: Num + PartialOrd + Copy + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
}

/// Floating-point scalar for networks and training (`f32` or `f64`).
pub trait FloatScalar: Real + Float {}

impl<T> FloatScalar for T where T: Real + Float {}

/// Sums a slice left to right.
pub fn sum<T: Real>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |acc, &x| acc + x)
}

/// Arithmetic mean; `None` for an empty slice.
pub fn mean<T: Real>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        None
    } else {
        Some(sum(xs) / T::from_count(xs.len()))
    }
}
