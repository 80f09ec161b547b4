//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type for embeddings, profiles and audio samples.
///
/// Implemented for `f32` and `f64`. Reductions (dot products, means, RMS)
/// always accumulate in `f64` regardless of the storage type.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    fn from_f64_lossy(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Canonical dot product with `f64` accumulation in index order.
///
/// Because IEEE multiplication is commutative and the summation order is
/// fixed, `dot(a, b) == dot(b, a)` bit for bit.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += x.as_f64() * y.as_f64();
    }
    acc
}

#[inline]
pub fn l2_norm<T: Scalar>(v: &[T]) -> f64 {
    dot(v, v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_is_symmetric_in_both_precisions() {
        let a = [0.1f32, 0.7, -0.3];
        let b = [0.9f32, -0.2, 0.4];
        assert_eq!(dot(&a, &b).to_bits(), dot(&b, &a).to_bits());
        let a64: Vec<f64> = a.iter().map(|&x| x as f64).collect();
        let b64: Vec<f64> = b.iter().map(|&x| x as f64).collect();
        assert_eq!(dot(&a64, &b64), dot(&a, &b));
    }
}
