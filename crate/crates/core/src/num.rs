//! Scalar abstraction for the windowed math kernels.
//!
//! Everything numeric in the window-level operations (correlation,
//! fluctuation, distribution) is generic over [`Real`], so the same code
//! runs on `f32` and `f64`. The pipeline itself instantiates everything
//! with [`crate::Value`] (`f64`).

use std::fmt::Debug;
use std::iter::Sum;

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    num_traits::Float + num_traits::FromPrimitive + num_traits::ToPrimitive + Sum + Debug + 'static
{
    /// Lossless conversion from a small non-negative integer (window
    /// indices, tuple counts). Panics only if the count does not fit the
    /// mantissa, which cannot happen for the window sizes this crate
    /// accepts.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Mean of a non-empty slice.
pub fn mean<R: Real>(values: &[R]) -> R {
    values.iter().copied().sum::<R>() / R::from_count(values.len())
}

/// Population standard deviation of a non-empty slice.
pub fn population_sd<R: Real>(values: &[R]) -> R {
    let m = mean(values);
    let var = values
        .iter()
        .map(|&v| {
            let d = v - m;
            d * d
        })
        .sum::<R>()
        / R::from_count(values.len());
    var.sqrt()
}

/// Median of a slice, averaging the two central order statistics for even
/// lengths. Returns `None` on empty input. Values must not contain NaN.
pub fn median<R: Real>(values: &[R]) -> Option<R> {
    if values.is_empty() {
        return None;
    }
    let mut sorted: Vec<R> = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("median input must be NaN-free"));
    let n = sorted.len();
    if n % 2 == 1 {
        Some(sorted[n / 2])
    } else {
        let two = R::from_count(2);
        Some((sorted[n / 2 - 1] + sorted[n / 2]) / two)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&[3.0f64, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0f64, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median::<f64>(&[]), None);
    }

    #[test]
    fn population_sd_of_constant_is_zero() {
        assert_eq!(population_sd(&[2.0f64; 8]), 0.0);
    }

    #[test]
    fn kernels_accept_f32() {
        let m: f32 = mean(&[1.0f32, 2.0, 3.0]);
        assert!((m - 2.0).abs() < 1e-6);
    }
}
