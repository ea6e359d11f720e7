//! Scalar types usable for model parameters.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type holding model parameters: `f32` or `f64`.
///
/// Parameters are stored in `Self`, while every score is accumulated in
/// `f64` regardless of the parameter type.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless widening for accumulation.
    fn to_acc(self) -> f64;

    /// Narrowing from the accumulator type, rounding to nearest.
    fn from_acc(x: f64) -> Self;

    /// Value as written to the on-disk model format.
    fn to_disk(self) -> f32 {
        self.to_acc() as f32
    }

    fn from_disk(x: f32) -> Self {
        Self::from_acc(x as f64)
    }
}

impl Scalar for f32 {
    #[inline]
    fn to_acc(self) -> f64 {
        self as f64
    }

    #[inline]
    fn from_acc(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn to_disk(self) -> f32 {
        self
    }

    #[inline]
    fn from_disk(x: f32) -> Self {
        x
    }
}

impl Scalar for f64 {
    #[inline]
    fn to_acc(self) -> f64 {
        self
    }

    #[inline]
    fn from_acc(x: f64) -> Self {
        x
    }
}

/// Dot product of two parameter columns, accumulated in `f64`.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.to_acc() * y.to_acc()).sum()
}

/// Dot product of an accumulator vector with a parameter column.
#[inline]
pub fn dot_acc<T: Scalar>(acc: &[f64], col: &[T]) -> f64 {
    debug_assert_eq!(acc.len(), col.len());
    acc.iter().zip(col).map(|(x, y)| x * y.to_acc()).sum()
}

#[inline]
pub fn norm_sq<T: Scalar>(a: &[T]) -> f64 {
    a.iter().map(|x| x.to_acc() * x.to_acc()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_disk_round_trip_is_identity() {
        for x in [0.0f32, -1.5, f32::MIN_POSITIVE, 1.0e-30, 3.402_823_5e38] {
            assert_eq!(f32::from_disk(x.to_disk()).to_bits(), x.to_bits());
        }
    }

    #[test]
    fn dot_accumulates_in_f64() {
        let a = [1.0e8f32, 1.0, -1.0e8];
        let b = [1.0f32, 1.0, 1.0];
        assert_eq!(dot(&a, &b), 1.0);
        assert_eq!(norm_sq(&[3.0f64, 4.0]), 25.0);
    }
}
