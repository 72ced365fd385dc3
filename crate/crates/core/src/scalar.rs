//! Floating-point abstraction shared by the metric and comparison code.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumCast + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` constant.
    fn lit(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 constant representable")
    }

    fn from_count(n: usize) -> Self {
        <Self as NumCast>::from(n).expect("count representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Arithmetic mean; `None` for an empty slice.
pub fn mean<T: Scalar>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    let n = T::from_count(xs.len());
    let rough = xs.iter().fold(T::zero(), |acc, &x| acc + x) / n;
    // second pass removes most of the summation rounding
    let fix = xs.iter().fold(T::zero(), |acc, &x| acc + (x - rough)) / n;
    Some(rough + fix)
}

/// Population standard deviation (divides by `n`).
pub fn population_std<T: Scalar>(xs: &[T]) -> Option<T> {
    let mu = mean(xs)?;
    let ss = xs.iter().fold(T::zero(), |acc, &x| acc + (x - mu) * (x - mu));
    Some((ss / T::from_count(xs.len())).sqrt())
}
