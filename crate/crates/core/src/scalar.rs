//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Real floating-point scalar (`f32` or `f64`).
///
/// Tolerances throughout the crate are written as `f64` literals and pass
/// through [`Scalar::tol`], which never lets a threshold fall below a small
/// multiple of machine epsilon. For `f64` every documented threshold is used
/// verbatim; for `f32` the epsilon floor takes over where the literal would
/// be unreachable.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Converts to `f64` for reporting and serialization.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// A tolerance literal clamped from below by `64·ε`.
    #[inline]
    fn tol(x: f64) -> Self {
        let floor = Self::epsilon() * Self::lit(64.0);
        Self::lit(x).max(floor)
    }

    #[inline]
    fn two() -> Self {
        Self::lit(2.0)
    }

    #[inline]
    fn half() -> Self {
        Self::lit(0.5)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `sign(x)·max(|x| − t, 0)`.
#[inline]
pub fn soft_threshold<F: Scalar>(x: F, t: F) -> F {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        F::zero()
    }
}

/// Sum with Neumaier compensation, in iteration order.
pub fn compensated_sum<F: Scalar, I: IntoIterator<Item = F>>(values: I) -> F {
    let mut acc = Compensated::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Running Neumaier (improved Kahan) sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Compensated<F> {
    pub sum: F,
    pub comp: F,
}

impl<F: Scalar> Compensated<F> {
    #[inline]
    pub fn add(&mut self, x: F) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another running sum in: its main term first, then its correction.
    #[inline]
    pub fn merge(&mut self, other: &Self) {
        self.add(other.sum);
        self.comp += other.comp;
    }

    #[inline]
    pub fn value(&self) -> F {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(1.0_f64, 0.5), 0.5);
        assert_eq!(soft_threshold(-1.0_f64, 0.5), -0.5);
        assert_eq!(soft_threshold(0.3_f64, 0.5), 0.0);
        assert_eq!(soft_threshold(0.5_f64, 0.5), 0.0);
    }

    #[test]
    fn tol_clamps_for_f32_only() {
        assert_eq!(f64::tol(1e-10), 1e-10);
        assert!(f32::tol(1e-10) > 1e-6);
    }

    #[test]
    fn compensated_beats_naive() {
        let xs = std::iter::once(1.0_f64).chain(std::iter::repeat(1e-16).take(10_000));
        let s = compensated_sum(xs);
        assert!((s - (1.0 + 1e-12)).abs() < 1e-15);
    }
}
