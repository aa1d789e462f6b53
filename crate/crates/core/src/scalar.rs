use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar used throughout the tabular solvers.
///
/// Probability tolerances scale with the type's precision: `f64` gets the
/// tight `1e-12` row-sum check, `f32` falls back to a multiple of its epsilon.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Largest deviation from 1 a stored probability row may have.
    fn prob_tolerance() -> Self {
        Self::lit(1e-12).max(Self::epsilon() * Self::lit(64.0))
    }

    /// Largest deviation that is silently repaired by renormalization.
    fn renorm_tolerance() -> Self {
        Self::lit(1e-9).max(Self::epsilon() * Self::lit(1024.0))
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `log(sum(exp(x)))` with max subtraction. Empty input or all `-inf` gives `-inf`.
pub fn log_sum_exp<T: Scalar>(xs: impl IntoIterator<Item = T> + Clone) -> T {
    let max = xs.clone().into_iter().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    if max == T::infinity() {
        return max;
    }
    let mut acc = T::zero();
    for x in xs {
        acc += (x - max).exp();
    }
    max + acc.ln()
}

/// `x * ln(x / y)` with the `0 ln 0 = 0` convention. Returns `None` when `x > 0 = y`.
pub(crate) fn xlogy_ratio<T: Scalar>(x: T, y: T) -> Option<T> {
    if x <= T::zero() {
        Some(T::zero())
    } else if y <= T::zero() {
        None
    } else {
        Some(x * (x / y).ln())
    }
}
