//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All math is written against [`Real`] so that the same code runs in `f64`
//! (the default, see the aliases at the crate root) and in `f32` for quick
//! low-precision sweeps.

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

/// Floating point scalar usable by the kernels, quadrature and series code.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + Sum
        + Default
        + Debug
        + Display
        + LowerExp
        + Send
        + Sync
        + 'static
{
}

/// Converts an `f64` literal into the working scalar type.
#[inline(always)]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Converts a count into the working scalar type.
#[inline(always)]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

/// Lossy conversion used for reports and serialization.
#[inline(always)]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Compensated (Kahan–Babuška/Neumaier) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum<T> {
    sum: T,
    comp: T,
}

impl<T: Real> KahanSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            comp: T::zero(),
        }
    }

    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp = self.comp + ((self.sum - t) + x);
        } else {
            self.comp = self.comp + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_small_terms() {
        let mut acc = KahanSum::<f64>::new();
        acc.add(1.0);
        for _ in 0..10_000 {
            acc.add(1e-16);
        }
        assert!((acc.value() - (1.0 + 1e-12)).abs() < 1e-15);
    }

    #[test]
    fn literals_in_f32() {
        let x: f32 = lit(0.5);
        assert_eq!(x, 0.5f32);
        assert_eq!(from_usize::<f32>(7), 7.0);
    }
}
